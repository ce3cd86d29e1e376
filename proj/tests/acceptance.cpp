// Copyright Contributors to the inv3d Project
// SPDX-License-Identifier: Apache-2.0
int main() { return 0; }
