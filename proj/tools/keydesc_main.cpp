#include "keydesc/cli.hpp"

int main(int argc, char** argv) { return keydesc::cli::run(argc, argv); }
