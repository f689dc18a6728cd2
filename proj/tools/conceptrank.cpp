#include "conceptrank/cli.hpp"

int main(int argc, char** argv) { return conceptrank::cli::run(argc, argv); }
