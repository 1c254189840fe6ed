#include <string>
#include <vector>

#include "enk/cli.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return enk::run_cli(args);
}
