// SPDX-License-Identifier: Apache-2.0
#include <malloc.h>

#include <iostream>

#include "slotdet/cli.hpp"

int main(int argc, char** argv) {
    // Keep freed tensor buffers in the heap; returning them to the kernel
    // costs a page fault per reuse.
    mallopt(M_MMAP_THRESHOLD, 1 << 30);
    mallopt(M_TRIM_THRESHOLD, 1 << 30);
    return slotdet::cli::run(argc, argv, std::cout, std::cerr);
}
