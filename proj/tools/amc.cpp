#include <exception>
#include <iostream>

#include "rbamc/commands.hpp"

int main(int argc, char** argv) {
    try {
        return rbamc::run_cli({argv + 1, argv + argc}, std::cout, std::cerr);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return rbamc::kExitNumeric;
    }
}
