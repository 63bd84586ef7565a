#include <vector>

#include "geomatch/cli.hpp"

int main(int argc, char** argv) {
    return geomatch::cli::run(std::vector<std::string>(argv + 1, argv + argc));
}
