#include "editlab/memory.hpp"

#include "editlab/errors.hpp"
#include "editlab/rng.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace editlab {

DenseVector forward(const AssociativeMemory& m, const DenseVector& key) {
    if (key.dim() != m.key_dim()) {
        std::ostringstream msg;
        msg << "forward: key dim " << key.dim() << " does not match memory key dim "
            << m.key_dim();
        throw ShapeError(msg.str());
    }
    return matvec(m.weights, key);
}

Prediction predict(const RelationReadout& r, const DenseVector& value) {
    if (value.dim() != r.value_dim()) throw ShapeError("predict: value dim mismatch");

    DenseVector logits = matvec(r.e, value);
    double maxlogit = logits[0];
    std::size_t argmax = 0;
    for (std::size_t i = 1; i < logits.dim(); ++i) {
        if (logits[i] > maxlogit) { // strict: ties keep the lowest index
            maxlogit = logits[i];
            argmax = i;
        }
    }

    Prediction out;
    out.argmax = argmax;
    out.probs.resize(logits.dim());
    double z = 0.0;
    for (std::size_t i = 0; i < logits.dim(); ++i) {
        out.probs[i] = std::exp(logits[i] - maxlogit);
        z += out.probs[i];
    }
    for (double& p : out.probs) p /= z;
    return out;
}

double nll_loss(const RelationReadout& r, const DenseVector& value, std::size_t target) {
    if (target >= r.vocab()) throw IndexError("nll_loss: target token out of range");
    DenseVector logits = matvec(r.e, value);
    double maxlogit = logits[0];
    for (std::size_t i = 1; i < logits.dim(); ++i) maxlogit = std::max(maxlogit, logits[i]);
    double z = 0.0;
    for (std::size_t i = 0; i < logits.dim(); ++i) z += std::exp(logits[i] - maxlogit);
    return std::log(z) - (logits[target] - maxlogit);
}

DenseVector value_gradient(const RelationReadout& r, const DenseVector& value,
                           std::size_t target) {
    if (target >= r.vocab()) throw IndexError("value_gradient: target token out of range");
    Prediction pred = predict(r, value);
    DenseVector residual(r.vocab());
    for (std::size_t i = 0; i < r.vocab(); ++i) residual[i] = pred.probs[i];
    residual[target] -= 1.0;
    return matvec_transposed(r.e, residual);
}

RelationReadout perturbed_readout(const RelationReadout& r, const PromptVariant& variant,
                                  double strength) {
    if (!std::isfinite(strength) || strength < 0.0)
        throw DegenerateInputError("perturbed_readout: strength must be finite and >= 0");
    if (strength == 0.0) return r;

    const std::size_t d = r.value_dim();
    Rng rng(variant.readout_perturbation_seed);
    const double s = strength / std::sqrt(static_cast<double>(d));
    DenseMatrix mixer(d, d);
    for (std::size_t i = 0; i < d; ++i) {
        for (std::size_t j = 0; j < d; ++j) mixer(i, j) = s * rng.gaussian();
        mixer(i, i) += 1.0;
    }
    RelationReadout out;
    out.relation_id = r.relation_id;
    out.e = matmul(r.e, mixer);
    return out;
}

} // namespace editlab
