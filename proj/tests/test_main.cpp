// Copyright Contributors to the inv3d Project
// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT
#include <doctest.h>

#include "inv3d/common.hpp"

int main(int argc, char** argv) {
  inv3d::init_runtime();
  doctest::Context context;
  context.applyCommandLine(argc, argv);
  return context.run();
}
