#include <iostream>

#include "blogjury/cli.hpp"

int main(int argc, char** argv)
{
    return blogjury::cli::run(argc, argv, {std::cin, std::cout, std::cerr});
}
