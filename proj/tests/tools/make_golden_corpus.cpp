// Regenerates the golden corpus: make_golden_corpus <dir>
// The committed bundle must then be rebuilt with `audit analyze`.

#include "golden.hpp"

#include <iostream>

int main(int argc, char** argv) {
    if (argc != 2) {
        std::cerr << "usage: make_golden_corpus <dir>\n";
        return 1;
    }
    iotaudit::testing::write_golden_corpus(argv[1]);
    return 0;
}
