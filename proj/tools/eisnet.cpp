#include "eisnet/commands.hpp"

int main(int argc, char** argv) {
    return eisnet::run_command(argc, argv);
}
