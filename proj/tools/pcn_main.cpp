#include "pcn/cli.hpp"

#include <iostream>

int main(int argc, char** argv)
{
    return pcn::cli::main(std::vector<std::string>(argv + 1, argv + argc), std::cout, std::cerr);
}
