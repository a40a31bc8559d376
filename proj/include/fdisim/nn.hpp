#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "fdisim/errors.hpp"
#include "fdisim/rng.hpp"

namespace fdisim {

// =============================================================================
// Minimal dense network with hand-written reverse mode
// =============================================================================
//
// Batches are flat row-major buffers (batch x dim). Every layer caches what
// its backward pass needs during forward; backward accumulates parameter
// gradients, so callers zero them once per optimisation step.

/// Named view of one parameter tensor and its gradient buffer.
struct ParamRef {
  std::string name;
  std::vector<std::size_t> shape;
  std::vector<double>* value;
  std::vector<double>* grad;
};

class Linear {
 public:
  Linear(std::size_t in_dim, std::size_t out_dim) : in_(in_dim), out_(out_dim) {
    weight.assign(in_ * out_, 0.0);
    bias.assign(out_, 0.0);
    grad_weight.assign(weight.size(), 0.0);
    grad_bias.assign(bias.size(), 0.0);
  }

  std::size_t in_dim() const { return in_; }
  std::size_t out_dim() const { return out_; }

  /// y = W x + b for every row of x; x is cached for backward.
  void forward(const std::vector<double>& x, std::size_t batch, std::vector<double>& y) {
    input_ = x;
    y.assign(batch * out_, 0.0);
    for (std::size_t b = 0; b < batch; ++b) {
      const double* xi = x.data() + b * in_;
      double* yo = y.data() + b * out_;
      for (std::size_t o = 0; o < out_; ++o) {
        const double* w = weight.data() + o * in_;
        double acc = bias[o];
        for (std::size_t i = 0; i < in_; ++i) {
          acc += w[i] * xi[i];
        }
        yo[o] = acc;
      }
    }
  }

  /// Accumulate parameter gradients from dy and, when dx is non-null,
  /// propagate the input gradient.
  void backward(const std::vector<double>& dy, std::size_t batch, std::vector<double>* dx) {
    for (std::size_t b = 0; b < batch; ++b) {
      const double* xi = input_.data() + b * in_;
      const double* dyo = dy.data() + b * out_;
      for (std::size_t o = 0; o < out_; ++o) {
        const double g = dyo[o];
        if (g == 0.0) {
          continue;
        }
        double* gw = grad_weight.data() + o * in_;
        for (std::size_t i = 0; i < in_; ++i) {
          gw[i] += g * xi[i];
        }
        grad_bias[o] += g;
      }
    }
    if (dx != nullptr) {
      dx->assign(batch * in_, 0.0);
      for (std::size_t b = 0; b < batch; ++b) {
        const double* dyo = dy.data() + b * out_;
        double* dxi = dx->data() + b * in_;
        for (std::size_t o = 0; o < out_; ++o) {
          const double g = dyo[o];
          if (g == 0.0) {
            continue;
          }
          const double* w = weight.data() + o * in_;
          for (std::size_t i = 0; i < in_; ++i) {
            dxi[i] += g * w[i];
          }
        }
      }
    }
  }

  void zero_grad() {
    std::fill(grad_weight.begin(), grad_weight.end(), 0.0);
    std::fill(grad_bias.begin(), grad_bias.end(), 0.0);
  }

  std::vector<double> weight;  ///< out x in, row-major
  std::vector<double> bias;
  std::vector<double> grad_weight;
  std::vector<double> grad_bias;

 private:
  std::size_t in_;
  std::size_t out_;
  std::vector<double> input_;  // forward cache
};

/// Two tanh hidden layers and a linear head.
class Mlp {
 public:
  Mlp(std::size_t in_dim, std::size_t hidden, std::size_t out_dim)
      : fc1_(in_dim, hidden), fc2_(hidden, hidden), fc3_(hidden, out_dim) {}

  /// Hidden weights ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)), output weights
  /// scaled by `output_gain`, biases zero. Weights are drawn row-major in
  /// layer order, so a (seed, stream) pair fixes every value.
  void init_weights(Rng& rng, double output_gain) {
    auto fill = [&rng](Linear& layer, double gain) {
      const double s = gain / std::sqrt(static_cast<double>(layer.in_dim()));
      for (double& w : layer.weight) {
        w = rng.uniform(-s, s);
      }
      std::fill(layer.bias.begin(), layer.bias.end(), 0.0);
    };
    fill(fc1_, 1.0);
    fill(fc2_, 1.0);
    fill(fc3_, output_gain);
  }

  std::size_t in_dim() const { return fc1_.in_dim(); }
  std::size_t out_dim() const { return fc3_.out_dim(); }

  /// Forward the whole batch; activations are cached for backward.
  void forward(const std::vector<double>& x, std::size_t batch, std::vector<double>& out) {
    batch_ = batch;
    fc1_.forward(x, batch, h1_);
    apply_tanh(h1_);
    fc2_.forward(h1_, batch, h2_);
    apply_tanh(h2_);
    fc3_.forward(h2_, batch, out);
  }

  /// Accumulate gradients of a scalar loss given d loss / d output.
  void backward(const std::vector<double>& dout) {
    fc3_.backward(dout, batch_, &dh_);
    tanh_backward(dh_, h2_);
    fc2_.backward(dh_, batch_, &dh2_);
    tanh_backward(dh2_, h1_);
    fc1_.backward(dh2_, batch_, nullptr);
  }

  void zero_grad() {
    fc1_.zero_grad();
    fc2_.zero_grad();
    fc3_.zero_grad();
  }

  void collect_params(const std::string& prefix, std::vector<ParamRef>& out) {
    auto add = [&](const std::string& layer, Linear& l) {
      out.push_back({prefix + "." + layer + ".weight",
                     {l.out_dim(), l.in_dim()},
                     &l.weight,
                     &l.grad_weight});
      out.push_back({prefix + "." + layer + ".bias", {l.out_dim()}, &l.bias, &l.grad_bias});
    };
    add("fc1", fc1_);
    add("fc2", fc2_);
    add("fc3", fc3_);
  }

 private:
  static void apply_tanh(std::vector<double>& v) {
    for (double& x : v) {
      x = std::tanh(x);
    }
  }

  /// d pre-activation = d post-activation * (1 - h^2), with h the cached
  /// post-activation values.
  static void tanh_backward(std::vector<double>& d, const std::vector<double>& h) {
    for (std::size_t i = 0; i < d.size(); ++i) {
      d[i] *= 1.0 - h[i] * h[i];
    }
  }

  Linear fc1_;
  Linear fc2_;
  Linear fc3_;
  std::size_t batch_ = 0;
  std::vector<double> h1_;
  std::vector<double> h2_;
  std::vector<double> dh_;
  std::vector<double> dh2_;
};

// =============================================================================
// Adam
// =============================================================================

struct AdamConfig {
  double learning_rate = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Adaptive-moment optimiser with bias correction. Moment buffers are keyed
/// by position in the ParamRef list, which must stay stable across steps.
class Adam {
 public:
  explicit Adam(const std::vector<ParamRef>& params, AdamConfig config = {})
      : cfg_(config) {
    m_.reserve(params.size());
    v_.reserve(params.size());
    for (const auto& p : params) {
      m_.emplace_back(p.value->size(), 0.0);
      v_.emplace_back(p.value->size(), 0.0);
    }
  }

  const AdamConfig& config() const { return cfg_; }
  std::size_t step_count() const { return t_; }

  /// Apply one update from the gradients currently stored in the refs.
  /// A non-finite gradient anywhere rejects the whole update.
  void step(const std::vector<ParamRef>& params) {
    if (params.size() != m_.size()) {
      throw UsageError("Adam::step: parameter list does not match optimizer state");
    }
    for (const auto& p : params) {
      for (double g : *p.grad) {
        if (!std::isfinite(g)) {
          throw NumericOverflowError("non-finite gradient in " + p.name, 0);
        }
      }
    }
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
      std::vector<double>& value = *params[pi].value;
      const std::vector<double>& grad = *params[pi].grad;
      std::vector<double>& m = m_[pi];
      std::vector<double>& v = v_[pi];
      for (std::size_t i = 0; i < value.size(); ++i) {
        m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * grad[i];
        v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * grad[i] * grad[i];
        const double m_hat = m[i] / bc1;
        const double v_hat = v[i] / bc2;
        value[i] -= cfg_.learning_rate * m_hat / (std::sqrt(v_hat) + cfg_.epsilon);
      }
    }
  }

  /// Scale all gradients so their joint L2 norm does not exceed `max_norm`.
  /// Returns the pre-clip norm.
  static double clip_grad_norm(const std::vector<ParamRef>& params, double max_norm) {
    double sq = 0.0;
    for (const auto& p : params) {
      for (double g : *p.grad) {
        sq += g * g;
      }
    }
    const double norm = std::sqrt(sq);
    if (max_norm > 0.0 && norm > max_norm) {
      const double scale = max_norm / norm;
      for (const auto& p : params) {
        for (double& g : *p.grad) {
          g *= scale;
        }
      }
    }
    return norm;
  }

  // Serialisation hooks for checkpoints.
  const std::vector<std::vector<double>>& first_moments() const { return m_; }
  const std::vector<std::vector<double>>& second_moments() const { return v_; }
  void restore(std::size_t step, std::vector<std::vector<double>> m,
               std::vector<std::vector<double>> v) {
    t_ = step;
    m_ = std::move(m);
    v_ = std::move(v);
  }

 private:
  AdamConfig cfg_;
  std::size_t t_ = 0;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
};

}  // namespace fdisim
