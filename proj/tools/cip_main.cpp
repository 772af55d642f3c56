#include "cip/cli.hpp"

#include <iostream>

int main(int argc, char** argv) { return cip::run_cli(argc, argv, std::cout, std::cerr); }
