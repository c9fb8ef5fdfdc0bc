#include <iostream>
#include <string>
#include <vector>

#include "geoaudit/app.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv, argv + argc);
    return geoaudit::run_cli(args, std::cout, std::cerr);
}
