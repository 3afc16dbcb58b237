#include "wave/cli.hpp"

int main(int argc, char** argv) { return wave::run_cli(argc, argv); }
