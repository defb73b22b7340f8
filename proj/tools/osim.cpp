#include "osim/cli.hpp"

int main(int argc, char** argv) { return osim::cli::run(argc, argv); }
