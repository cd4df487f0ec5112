#include <iostream>

#include "asyncbev/cli.hpp"

int main(int argc, char** argv) { return asyncbev::run_cli(argc, argv, std::cout, std::cerr); }
