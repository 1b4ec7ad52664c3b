#include "hydroseg/cli.hpp"

int main(int argc, char** argv) { return hydroseg::cli::dispatch(argc, argv); }
