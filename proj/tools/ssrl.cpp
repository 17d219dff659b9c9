#include <iostream>

#include "ssrl/cli/commands.hpp"

int main(int argc, char** argv) { return ssrl::cli::run(argc, argv, std::cout, std::cerr); }
