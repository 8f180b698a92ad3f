#include <iostream>

#include "viarl/cli/commands.hpp"

int main(int argc, char** argv) { return viarl::cli::run_cli(argc, argv, std::cout, std::cerr); }
