#include "dynorg/cli.hpp"

int main(int argc, char** argv) { return dynorg::run_cli(argc, argv); }
