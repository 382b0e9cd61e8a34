#pragma once

#include <cstdint>
#include <memory>
#include <vector>

#include "distileval/arch_zoo.hpp"
#include "distileval/objectives.hpp"

namespace distileval {

/// A twice-differentiable scalar function of a flat parameter vector.
/// Implementations may supply an exact Hessian-vector product; otherwise
/// hvp() falls back to central finite differences of the gradient.
class LossFunction {
public:
    virtual ~LossFunction() = default;
    virtual int dim() const = 0;
    virtual double value(const std::vector<double>& theta) = 0;
    virtual void gradient(const std::vector<double>& theta,
                          std::vector<double>& grad) = 0;
    virtual bool has_exact_hvp() const { return false; }
    virtual void hvp_exact(const std::vector<double>& theta,
                           const std::vector<double>& v,
                           std::vector<double>& out);
};

enum class HvpMode {
    auto_select, // exact when the loss provides it, otherwise fd
    exact,       // require the loss's own product
    fd           // central finite differences of the gradient
};

HvpMode hvp_mode_from_string(const std::string& s);

/// Hessian-vector product H(theta) * v. The finite-difference path uses
/// step h = 1e-3 * max|theta| + 1e-6 along the unit direction v/|v| and
/// rescales by |v|. |v| below 1e-12 is rejected as a precondition error.
std::vector<double> hvp(LossFunction& loss, const std::vector<double>& theta,
                        const std::vector<double>& v,
                        HvpMode mode = HvpMode::auto_select);

struct SpectrumOptions {
    int k = 20;
    int iters = 100;
    double tol = 1e-4; // absolute change in the Rayleigh quotient
    std::uint64_t seed = 0;
    HvpMode mode = HvpMode::auto_select;
};

struct SpectrumResult {
    std::vector<double> eigenvalues; // sorted by |value|, descending
    std::vector<std::vector<double>> eigenvectors; // unit norm, orthogonal
    std::vector<double> residuals;   // |H v - lambda v| per pair
    std::vector<char> converged;     // tol reached within the iteration cap
    std::vector<int> iterations;
};

/// Power iteration with Gram-Schmidt deflation against already-found
/// eigenvectors. Indefinite Hessians are fine: iteration follows the
/// dominant-magnitude eigenvalue and the Rayleigh quotient recovers its
/// sign. Non-convergence is reported through residuals/converged, never
/// thrown.
SpectrumResult top_eigenpairs(LossFunction& loss,
                              const std::vector<double>& theta,
                              const SpectrumOptions& opt = {});

struct LandscapeGrid {
    std::vector<double> alphas1, alphas2;
    std::vector<std::vector<double>> losses; // losses[i][j] at (a1_i, a2_j)
};

/// Evaluates loss(theta + a1*v1 + a2*v2) over a square grid with both
/// alphas in linspace(-radius, radius, grid_n). grid_n must be odd so the
/// exact center point theta is part of the grid; theta itself is left
/// untouched.
LandscapeGrid landscape_slice(LossFunction& loss,
                              const std::vector<double>& theta,
                              const std::vector<double>& v1,
                              const std::vector<double>& v2, double radius,
                              int grid_n);

/// Cross-entropy of a fixed model on a fixed batch, as a function of the
/// trainable parameters. Runs in inference mode (normalization uses frozen
/// running statistics, no path dropping) so the loss is a pure function of
/// theta. Provides the exact Hessian-vector product by running the
/// forward/backward pass in dual-number arithmetic with tangent v.
class ModelCeLoss : public LossFunction {
public:
    /// Copies the architecture and every parameter (including buffers)
    /// from source; the source model itself is never touched again.
    ModelCeLoss(const Model& source, Tensor images, TargetBatch targets);

    int dim() const override { return dim_; }
    double value(const std::vector<double>& theta) override;
    void gradient(const std::vector<double>& theta,
                  std::vector<double>& grad) override;
    bool has_exact_hvp() const override { return true; }
    void hvp_exact(const std::vector<double>& theta,
                   const std::vector<double>& v,
                   std::vector<double>& out) override;

    /// theta for the captured model state, in this loss's flat order.
    const std::vector<double>& theta0() const { return theta0_; }

private:
    Tensor images_;
    Tensor target_probs_;
    std::unique_ptr<Model> m_;
    std::unique_ptr<ModelT<Dual>> md_;
    std::vector<Param*> tp_;
    std::vector<ParamT<Dual>*> tpd_;
    std::vector<double> theta0_;
    int dim_ = 0;
};

} // namespace distileval
