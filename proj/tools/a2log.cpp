#include <string>
#include <vector>

#include "a2log/cli.hpp"

int main(int argc, char** argv)
{
    return a2log::run_cli(std::vector<std::string>(argv + 1, argv + argc));
}
