#include "mweattn/cli.hpp"

int main(int argc, char** argv) {
    return mweattn::cli::run(argc, argv);
}
