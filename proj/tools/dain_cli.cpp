#include "dain/cli.hpp"

int main(int argc, char** argv) { return dain::cli::dispatch(argc, argv); }
