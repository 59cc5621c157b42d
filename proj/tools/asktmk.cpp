#include "asktmk/cli.hpp"

int main(int argc, char** argv) { return asktmk::cli::run(argc, argv); }
