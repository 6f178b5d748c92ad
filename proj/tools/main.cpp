#include <iostream>

#include "telscope/cli.hpp"

int main(int argc, char** argv) { return telscope::cli::run(argc, argv, std::cout, std::cerr); }
