#include <poolsim/cli.hpp>

int main(int argc, char** argv) { return poolsim::cli_main(argc, argv); }
