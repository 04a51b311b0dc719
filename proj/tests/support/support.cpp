#include "support.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace rap::test {

Tensor random_matrix(Rng& rng, std::size_t rows, std::size_t cols, double scale) {
  std::vector<double> v(rows * cols);
  for (double& x : v) x = scale * rng.normal();
  return Tensor::matrix(rows, cols, std::move(v));
}

Tensor random_unit_rows(Rng& rng, std::size_t rows, std::size_t cols) {
  Mat m(rows, std::vector<double>(cols));
  for (auto& row : m) {
    double ss = 0.0;
    for (double& x : row) {
      x = rng.normal();
      ss += x * x;
    }
    for (double& x : row) x /= std::sqrt(ss);
  }
  return from_mat(m);
}

Mat to_mat(const Tensor& t) {
  Mat m(t.rows(), std::vector<double>(t.cols()));
  for (std::size_t r = 0; r < t.rows(); ++r)
    for (std::size_t c = 0; c < t.cols(); ++c) m[r][c] = t.at(r, c);
  return m;
}

Tensor from_mat(const Mat& m) {
  std::vector<double> v;
  for (const auto& row : m) v.insert(v.end(), row.begin(), row.end());
  return Tensor::matrix(m.size(), m.empty() ? 0 : m[0].size(), std::move(v));
}

namespace {

double norm(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

double relative(const std::vector<double>& analytic, const std::vector<double>& numeric) {
  std::vector<double> diff(analytic.size());
  for (std::size_t i = 0; i < diff.size(); ++i) diff[i] = analytic[i] - numeric[i];
  return norm(diff) / std::max({norm(analytic), norm(numeric), 1e-12});
}

}  // namespace

double gradient_error(const TensorFn& f, const std::vector<Tensor>& inputs, double h) {
  Tape tape;
  std::vector<Tensor> bound;
  for (const Tensor& t : inputs) bound.push_back(tape.variable(t));
  tape.backward(f(bound));

  std::vector<double> analytic, numeric;
  std::vector<Tensor> work;
  for (const Tensor& t : inputs) work.push_back(t.detach());
  for (std::size_t i = 0; i < work.size(); ++i) {
    const auto g = bound[i].grad();
    analytic.insert(analytic.end(), g.begin(), g.end());
    auto vals = work[i].mutable_values();
    for (std::size_t j = 0; j < vals.size(); ++j) {
      const double x = vals[j];
      vals[j] = x + h;
      const double up = f(work).item();
      vals[j] = x - h;
      const double down = f(work).item();
      vals[j] = x;
      numeric.push_back((up - down) / (2.0 * h));
    }
  }
  return relative(analytic, numeric);
}

double param_gradient_error(const ParamFn& f, const ParameterSet& params, double h) {
  Tape tape;
  const ParameterSet bound = params.bind(tape);
  tape.backward(f(bound));

  std::vector<double> analytic, numeric;
  ParameterSet work = params.clone();
  for (std::size_t i = 0; i < work.size(); ++i) {
    const auto g = bound.values()[i].grad();
    if (g.empty())
      analytic.insert(analytic.end(), bound.values()[i].numel(), 0.0);
    else
      analytic.insert(analytic.end(), g.begin(), g.end());
    auto vals = work.values()[i].mutable_values();
    for (std::size_t j = 0; j < vals.size(); ++j) {
      const double x = vals[j];
      vals[j] = x + h;
      const double up = f(work).item();
      vals[j] = x - h;
      const double down = f(work).item();
      vals[j] = x;
      numeric.push_back((up - down) / (2.0 * h));
    }
  }
  return relative(analytic, numeric);
}

double ref_dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

Mat ref_dissim(const Mat& patches, const Mat& tokens) {
  Mat m(patches.size(), std::vector<double>(tokens.size()));
  for (std::size_t n = 0; n < patches.size(); ++n)
    for (std::size_t l = 0; l < tokens.size(); ++l) m[n][l] = 1.0 - ref_dot(patches[n], tokens[l]);
  return m;
}

std::vector<double> ref_row_min(const Mat& m) {
  std::vector<double> out;
  for (const auto& row : m) out.push_back(*std::min_element(row.begin(), row.end()));
  return out;
}

std::vector<double> ref_col_min(const Mat& m) {
  std::vector<double> out(m[0].size());
  for (std::size_t c = 0; c < out.size(); ++c) {
    out[c] = m[0][c];
    for (const auto& row : m) out[c] = std::min(out[c], row[c]);
  }
  return out;
}

std::vector<double> ref_weights(const std::vector<double>& r, double floor) {
  std::vector<double> w;
  bool any = false;
  for (double x : r) {
    double v = 1.0 - x;
    if (v < 0.0) v = 0.0;
    if (v > 1.0) v = 1.0;
    any = any || v > 0.0;
    w.push_back(v);
  }
  if (!any)
    for (double& v : w) v += floor;
  return w;
}

double ref_infonce(const Mat& q, const Mat& c, double tau) {
  double total = 0.0;
  for (std::size_t i = 0; i < q.size(); ++i) {
    double denom = 0.0;
    for (std::size_t j = 0; j < c.size(); ++j) denom += std::exp(ref_dot(q[i], c[j]) / tau);
    total += -std::log(std::exp(ref_dot(q[i], c[i]) / tau) / denom);
  }
  return total / static_cast<double>(q.size());
}

double ref_multi_positive(const Mat& q, const std::vector<Mat>& locals, const Mat& w, double tau) {
  double total = 0.0;
  for (std::size_t i = 0; i < q.size(); ++i) {
    double num = 0.0;
    for (std::size_t l = 0; l < locals[i].size(); ++l)
      num += w[i][l] * std::exp(ref_dot(q[i], locals[i][l]) / tau);
    double denom = 0.0;
    for (const Mat& item : locals)
      for (const auto& row : item) denom += std::exp(ref_dot(q[i], row) / tau);
    total += -std::log(num / denom);
  }
  return total / static_cast<double>(q.size());
}

std::vector<std::size_t> ref_ranks(const Mat& sim, const std::vector<std::size_t>& truth) {
  std::vector<std::size_t> ranks;
  for (std::size_t i = 0; i < sim.size(); ++i) {
    std::vector<std::size_t> order(sim[i].size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return sim[i][a] > sim[i][b]; });
    const auto it = std::find(order.begin(), order.end(), truth[i]);
    ranks.push_back(static_cast<std::size_t>(it - order.begin()) + 1);
  }
  return ranks;
}

double ref_recall(const std::vector<std::size_t>& ranks, std::size_t k) {
  std::size_t hit = 0;
  for (std::size_t r : ranks) hit += r <= k ? 1 : 0;
  return 100.0 * static_cast<double>(hit) / static_cast<double>(ranks.size());
}

double ref_median(std::vector<std::size_t> ranks) {
  std::sort(ranks.begin(), ranks.end());
  const std::size_t n = ranks.size();
  if (n % 2 == 1) return static_cast<double>(ranks[n / 2]);
  return 0.5 * static_cast<double>(ranks[n / 2 - 1] + ranks[n / 2]);
}

std::vector<Mat> blocks(const Tensor& stacked, std::size_t batch) {
  const Mat all = to_mat(stacked);
  const std::size_t count = all.size() / batch;
  std::vector<Mat> out(batch);
  for (std::size_t b = 0; b < batch; ++b)
    out[b].assign(all.begin() + static_cast<long>(b * count),
                  all.begin() + static_cast<long>((b + 1) * count));
  return out;
}

}  // namespace rap::test
