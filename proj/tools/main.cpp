#include <iostream>

#include "levisqueeze/cli.hpp"

int main(int argc, char** argv) { return levisqueeze::run_cli(argc, argv, std::cout, std::cerr); }
