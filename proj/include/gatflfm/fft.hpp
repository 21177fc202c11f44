#pragma once

#include <complex>
#include <vector>

namespace gatflfm::fft {

/// Smallest n' >= n whose prime factors are all in {2, 3, 5, 7}.
int next_fast_size(int n);

/// 2D complex-to-complex DFT of a fixed shape, both directions unnormalized
/// (backward carries no 1/N factor). Plan creation is serialized internally;
/// execution is safe to call concurrently on distinct buffers.
class Dft2d {
public:
    Dft2d(int rows, int cols);
    ~Dft2d();
    Dft2d(const Dft2d&) = delete;
    Dft2d& operator=(const Dft2d&) = delete;

    int rows() const { return rows_; }
    int cols() const { return cols_; }
    std::size_t size() const { return static_cast<std::size_t>(rows_) * cols_; }

    void forward(std::complex<double>* data) const;  // in place
    void backward(std::complex<double>* data) const; // in place, unnormalized

private:
    int rows_, cols_;
    void* plan_fwd_;
    void* plan_bwd_;
};

} // namespace gatflfm::fft
