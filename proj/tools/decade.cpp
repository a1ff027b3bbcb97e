#include "decade/cli.hpp"

int main(int argc, char** argv) { return decade::cli::run(argc, argv); }
