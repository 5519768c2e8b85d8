#include "twophase/cli.hpp"

int main(int argc, char** argv) { return twophase::run_cli(argc, argv); }
