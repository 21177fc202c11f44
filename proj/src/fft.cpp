#include "gatflfm/fft.hpp"

#include <fftw3.h>

#include <mutex>
#include <stdexcept>

namespace gatflfm::fft {
namespace {
// FFTW's planner is not thread-safe; plan creation/destruction is locked.
std::mutex& planner_mutex() {
    static std::mutex m;
    return m;
}
} // namespace

int next_fast_size(int n) {
    if (n < 1) throw std::invalid_argument("next_fast_size: n must be >= 1");
    for (int c = n;; ++c) {
        int r = c;
        for (int p : {2, 3, 5, 7})
            while (r % p == 0) r /= p;
        if (r == 1) return c;
    }
}

Dft2d::Dft2d(int rows, int cols) : rows_(rows), cols_(cols) {
    if (rows < 1 || cols < 1) throw std::invalid_argument("Dft2d: bad shape");
    std::vector<std::complex<double>> scratch(size());
    auto* p = reinterpret_cast<fftw_complex*>(scratch.data());
    std::lock_guard lock(planner_mutex());
    plan_fwd_ = fftw_plan_dft_2d(rows, cols, p, p, FFTW_FORWARD,
                                 FFTW_ESTIMATE | FFTW_UNALIGNED);
    plan_bwd_ = fftw_plan_dft_2d(rows, cols, p, p, FFTW_BACKWARD,
                                 FFTW_ESTIMATE | FFTW_UNALIGNED);
    if (!plan_fwd_ || !plan_bwd_) throw std::runtime_error("Dft2d: fftw plan failed");
}

Dft2d::~Dft2d() {
    std::lock_guard lock(planner_mutex());
    fftw_destroy_plan(static_cast<fftw_plan>(plan_fwd_));
    fftw_destroy_plan(static_cast<fftw_plan>(plan_bwd_));
}

void Dft2d::forward(std::complex<double>* data) const {
    auto* p = reinterpret_cast<fftw_complex*>(data);
    fftw_execute_dft(static_cast<fftw_plan>(plan_fwd_), p, p);
}

void Dft2d::backward(std::complex<double>* data) const {
    auto* p = reinterpret_cast<fftw_complex*>(data);
    fftw_execute_dft(static_cast<fftw_plan>(plan_bwd_), p, p);
}

} // namespace gatflfm::fft
