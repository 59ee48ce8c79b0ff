#ifndef BEAMTRACK_FFT_HPP
#define BEAMTRACK_FFT_HPP

#include <complex>
#include <cstddef>
#include <stdexcept>

#include <fftw3.h>

namespace beamtrack {

/// RAII pair of FFTW plans for one transform size. Plans are created once
/// (FFTW_ESTIMATE, so planning is reproducible) and executed through the
/// new-array interface, which is safe to call concurrently on distinct
/// buffers. FFTW_UNALIGNED lets us execute on plain std::vector storage.
class FftPlan {
public:
    explicit FftPlan(std::size_t n) : n_(n) {
        if (n < 2) throw std::invalid_argument("FftPlan: size must be >= 2");
        double* re = fftw_alloc_real(n);
        fftw_complex* co = fftw_alloc_complex(n / 2 + 1);
        if (!re || !co) {
            fftw_free(re);
            fftw_free(co);
            throw std::bad_alloc();
        }
        const unsigned flags = FFTW_ESTIMATE | FFTW_UNALIGNED;
        forward_ = fftw_plan_dft_r2c_1d(static_cast<int>(n), re, co, flags);
        inverse_ = fftw_plan_dft_c2r_1d(static_cast<int>(n), co, re,
                                        flags | FFTW_PRESERVE_INPUT);
        fftw_free(re);
        fftw_free(co);
        if (!forward_ || !inverse_) throw std::runtime_error("FftPlan: planner failed");
    }

    FftPlan(const FftPlan&) = delete;
    FftPlan& operator=(const FftPlan&) = delete;

    ~FftPlan() {
        if (forward_) fftw_destroy_plan(forward_);
        if (inverse_) fftw_destroy_plan(inverse_);
    }

    std::size_t size() const { return n_; }
    std::size_t num_bins() const { return n_ / 2 + 1; }

    /// Unnormalized real-to-complex DFT; out holds n/2+1 one-sided bins.
    void forward(const double* in, std::complex<double>* out) const {
        fftw_execute_dft_r2c(forward_, const_cast<double*>(in),
                             reinterpret_cast<fftw_complex*>(out));
    }

    /// Unnormalized complex-to-real inverse (sum over all n Hermitian bins);
    /// caller divides by n for the 1/L convention. Input is preserved.
    void inverse(const std::complex<double>* in, double* out) const {
        fftw_execute_dft_c2r(inverse_,
                             reinterpret_cast<fftw_complex*>(const_cast<std::complex<double>*>(in)),
                             out);
    }

private:
    std::size_t n_;
    fftw_plan forward_ = nullptr;
    fftw_plan inverse_ = nullptr;
};

} // namespace beamtrack

#endif // BEAMTRACK_FFT_HPP
