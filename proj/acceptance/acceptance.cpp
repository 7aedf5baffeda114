#include "mdatrack/suites.hpp"

#include <iostream>

// One line per acceptance criterion; nonzero exit when any fails.
int main() {
    bool ok = true;
    for (const auto& r : mdt::acceptance_suites()) {
        std::cout << mdt::format_result(r) << std::endl;
        ok = ok && r.passed;
    }
    return ok ? 0 : 1;
}
