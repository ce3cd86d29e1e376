// Copyright Contributors to the inv3d Project
// SPDX-License-Identifier: Apache-2.0
#include <pybind11/pybind11.h>
PYBIND11_MODULE(_inv3d, m) { m.doc() = "stub"; }
