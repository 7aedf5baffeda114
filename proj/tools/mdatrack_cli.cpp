#include "mdatrack/cli.hpp"

#include <iostream>

int main(int argc, char** argv) { return mdt::run_cli(argc, argv, std::cout, std::cerr); }
