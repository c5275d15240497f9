#pragma once

// One gradient-check case per autodiff primitive; inputs are drawn from a seed.

#include <algorithm>
#include <functional>
#include <ostream>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "gradcheck.hpp"
#include "xdn/autodiff.hpp"
#include "xdn/kernels.hpp"

namespace primitive_cases {

using xdn::Shape;
using xdn::Tensor;
using xdn::ad::Var;

struct Instance {
  std::vector<Tensor> inputs;
  std::function<Var(const std::vector<Var>&)> build;
};

struct Case {
  std::string name;
  std::function<Instance(std::uint64_t seed)> make;
};

inline void PrintTo(const Case& c, std::ostream* os) { *os << c.name; }

inline Tensor rand(const Shape& s, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor t(s);
  for (double& v : t.data()) v = u(rng);
  return t;
}

// Values bounded away from zero so relu kinks sit far outside the difference step.
inline Tensor rand_off_zero(const Shape& s, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.05, 1.0);
  std::bernoulli_distribution sign(0.5);
  Tensor t(s);
  for (double& v : t.data()) v = sign(rng) ? u(rng) : -u(rng);
  return t;
}

// Distinct values spaced far apart relative to the difference step, so no
// pooling window is near a tie.
inline Tensor rand_distinct(const Shape& s, std::mt19937_64& rng) {
  Tensor t(s);
  std::vector<double> v(t.size());
  std::iota(v.begin(), v.end(), 0.0);
  std::shuffle(v.begin(), v.end(), rng);
  for (std::size_t i = 0; i < v.size(); ++i) t[i] = v[i] / static_cast<double>(v.size());
  return t;
}

inline Var projected(const Var& y, std::mt19937_64& rng) { return gradcheck::project(y, rand(y->shape(), rng)); }

inline std::vector<Case> all() {
  using namespace xdn::ad;
  std::vector<Case> cases;
  auto add_case = [&](std::string name, std::function<Instance(std::mt19937_64&)> f) {
    cases.push_back({std::move(name), [f](std::uint64_t seed) {
                       std::mt19937_64 rng(seed);
                       return f(rng);
                     }});
  };
  add_case("conv2d_3x3_pad1", [](auto& rng) {
    auto w = rand({2, 4, 6, 6}, rng);
    return Instance{{rand({2, 3, 6, 6}, rng), rand({4, 3, 3, 3}, rng), rand({4}, rng)},
                    [w](const std::vector<Var>& v) { return gradcheck::project(conv2d(v[0], v[1], v[2], 1), w); }};
  });
  add_case("conv2d_1x1_nobias", [](auto& rng) {
    auto w = rand({1, 3, 5, 4}, rng);
    return Instance{{rand({1, 2, 5, 4}, rng), rand({3, 2, 1, 1}, rng)},
                    [w](const std::vector<Var>& v) { return gradcheck::project(conv2d(v[0], v[1], nullptr, 0), w); }};
  });
  add_case("conv2d_3x3_pad0", [](auto& rng) {
    auto w = rand({1, 2, 3, 4}, rng);
    return Instance{{rand({1, 2, 5, 6}, rng), rand({2, 2, 3, 3}, rng), rand({2}, rng)},
                    [w](const std::vector<Var>& v) { return gradcheck::project(conv2d(v[0], v[1], v[2], 0), w); }};
  });
  add_case("maxpool2d", [](auto& rng) {
    auto w = rand({1, 2, 3, 3}, rng);
    return Instance{{rand_distinct({1, 2, 6, 6}, rng)},
                    [w](const std::vector<Var>& v) { return gradcheck::project(maxpool2d(v[0]).output, w); }};
  });
  add_case("unpool2d", [](auto& rng) {
    const auto argmax = xdn::kernels::maxpool2x2_forward(rand_distinct({1, 2, 6, 6}, rng)).argmax;
    auto w = rand({1, 2, 6, 6}, rng);
    return Instance{{rand({1, 2, 3, 3}, rng)}, [w, argmax](const std::vector<Var>& v) {
                      return gradcheck::project(unpool2d(v[0], argmax, {1, 2, 6, 6}), w);
                    }};
  });
  add_case("upsample_bilinear2x", [](auto& rng) {
    auto w = rand({2, 2, 6, 8}, rng);
    return Instance{{rand({2, 2, 3, 4}, rng)},
                    [w](const std::vector<Var>& v) { return gradcheck::project(upsample_bilinear2x(v[0]), w); }};
  });
  add_case("upsample_bilinear2x_adjoint", [](auto& rng) {
    auto w = rand({1, 2, 3, 4}, rng);
    return Instance{{rand({1, 2, 6, 8}, rng)}, [w](const std::vector<Var>& v) {
                      return gradcheck::project(upsample_bilinear2x_adjoint(v[0]), w);
                    }};
  });
  add_case("concat_channels", [](auto& rng) {
    auto w = rand({2, 5, 3, 3}, rng);
    return Instance{{rand({2, 2, 3, 3}, rng), rand({2, 3, 3, 3}, rng)},
                    [w](const std::vector<Var>& v) { return gradcheck::project(concat_channels(v[0], v[1]), w); }};
  });
  add_case("slice_channels", [](auto& rng) {
    auto w = rand({1, 2, 4, 4}, rng);
    return Instance{{rand({1, 5, 4, 4}, rng)},
                    [w](const std::vector<Var>& v) { return gradcheck::project(slice_channels(v[0], 1, 2), w); }};
  });
  add_case("relu", [](auto& rng) {
    auto w = rand({1, 2, 4, 4}, rng);
    return Instance{{rand_off_zero({1, 2, 4, 4}, rng)},
                    [w](const std::vector<Var>& v) { return gradcheck::project(relu(v[0]), w); }};
  });
  add_case("sigmoid", [](auto& rng) {
    auto w = rand({1, 2, 4, 4}, rng);
    return Instance{{rand({1, 2, 4, 4}, rng, -3.0, 3.0)},
                    [w](const std::vector<Var>& v) { return gradcheck::project(sigmoid(v[0]), w); }};
  });
  add_case("mul", [](auto& rng) {
    auto w = rand({1, 1, 4, 5}, rng);
    return Instance{{rand({1, 1, 4, 5}, rng), rand({1, 1, 4, 5}, rng)},
                    [w](const std::vector<Var>& v) { return gradcheck::project(mul(v[0], v[1]), w); }};
  });
  add_case("add", [](auto& rng) {
    auto w = rand({1, 1, 4, 5}, rng);
    return Instance{{rand({1, 1, 4, 5}, rng), rand({1, 1, 4, 5}, rng)},
                    [w](const std::vector<Var>& v) { return gradcheck::project(add(v[0], v[1]), w); }};
  });
  add_case("sub", [](auto& rng) {
    auto w = rand({1, 1, 4, 5}, rng);
    return Instance{{rand({1, 1, 4, 5}, rng), rand({1, 1, 4, 5}, rng)},
                    [w](const std::vector<Var>& v) { return gradcheck::project(sub(v[0], v[1]), w); }};
  });
  add_case("scale_add", [](auto& rng) {
    auto w = rand({1, 1, 4, 5}, rng);
    return Instance{{rand({1, 1, 4, 5}, rng), rand({1, 1, 4, 5}, rng)},
                    [w](const std::vector<Var>& v) { return gradcheck::project(scale_add(v[0], v[1], 0.37), w); }};
  });
  add_case("mse_mean", [](auto& rng) {
    return Instance{{rand({2, 1, 4, 5}, rng), rand({2, 1, 4, 5}, rng)},
                    [](const std::vector<Var>& v) { return mse_mean(v[0], v[1]); }};
  });
  add_case("sum_all", [](auto& rng) {
    return Instance{{rand({2, 3, 2, 2}, rng)}, [](const std::vector<Var>& v) { return sum_all(v[0]); }};
  });
  return cases;
}

}  // namespace primitive_cases
