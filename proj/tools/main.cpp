#include <iostream>

#include "dualmem/cli.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return dualmem::run_cli(args, std::cout, std::cerr);
}
