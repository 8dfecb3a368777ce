#include "zsl/parallel.hpp"

#include <omp.h>

namespace zsl {

int set_jobs(int jobs) {
    const int previous = omp_get_max_threads();
    omp_set_num_threads(jobs < 1 ? 1 : jobs);
    return previous;
}

int max_jobs() {
    return omp_get_max_threads();
}

} // namespace zsl
