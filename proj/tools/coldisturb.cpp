#include <iostream>

#include "coldisturb/cli.hpp"

int main(int argc, char** argv) { return coldisturb::cli_main(argc, argv, std::cout, std::cerr); }
