#include "ltlab/cli.hpp"

int main(int argc, char** argv) { return ltlab::run_cli(argc, argv); }
