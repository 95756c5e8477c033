#include "voila/cli/cli.hpp"

int main(int argc, char** argv) { return voila::cli::dispatch(argc, argv); }
