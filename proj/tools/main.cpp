#include "fvforge/cli.hpp"

int main(int argc, char** argv) { return fvforge::dispatch(argc, argv); }
