#include "pets/cli.hpp"

int main(int argc, char** argv) { return pets::run_cli(argc, argv); }
