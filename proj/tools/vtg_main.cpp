// SPDX-License-Identifier: Apache-2.0
#include "vtg/cli.hpp"

int main(int argc, char** argv) { return vtg::cli::run(argc, argv); }
