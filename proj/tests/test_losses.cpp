// Copyright Contributors to the inv3d Project
// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>
