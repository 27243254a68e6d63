#include "gait/losses.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace gait {

template <typename T>
LossGrad<T> triplet_loss(const Tensor<T>& emb, const std::vector<int>& labels, int bins, double margin) {
  if (emb.rank() != 2 || static_cast<std::size_t>(emb.dim(0)) != labels.size())
    throw std::invalid_argument("triplet: embeddings and labels differ in length");
  const int B = emb.dim(0), D = emb.dim(1);
  if (bins < 1 || D % bins != 0) throw std::invalid_argument("triplet: bins must divide the width");
  const int dim = D / bins;

  bool any = false;
  for (int a = 0; a < B && !any; ++a)
    for (int p = 0; p < B && !any; ++p) {
      if (p == a || labels[p] != labels[a]) continue;
      for (int n = 0; n < B; ++n)
        if (labels[n] != labels[a]) {
          any = true;
          break;
        }
    }
  if (!any) throw std::invalid_argument("degenerate batch");

  LossGrad<T> out;
  out.grad = Tensor<T>(emb.shape);
  std::vector<double> dist(static_cast<std::size_t>(B) * B);
  std::vector<double> coef(static_cast<std::size_t>(B) * B);  // d loss_bin / d dist(i, j)
  std::vector<double> hinge;
  double total = 0.0;
  for (int bin = 0; bin < bins; ++bin) {
    const int off = bin * dim;
    for (int i = 0; i < B; ++i)
      for (int j = 0; j < B; ++j) {
        double s = 0.0;
        for (int k = 0; k < dim; ++k) {
          const double d = static_cast<double>(emb.data[i * D + off + k]) - emb.data[j * D + off + k];
          s += d * d;
        }
        dist[i * B + j] = std::sqrt(s);
      }
    std::fill(coef.begin(), coef.end(), 0.0);
    hinge.clear();
    long active = 0;
    for (int a = 0; a < B; ++a)
      for (int p = 0; p < B; ++p) {
        if (p == a || labels[p] != labels[a]) continue;
        for (int n = 0; n < B; ++n) {
          if (labels[n] == labels[a]) continue;
          const double v = dist[a * B + p] - dist[a * B + n] + margin;
          if (v > 0.0) {
            hinge.push_back(v);
            ++active;
            coef[a * B + p] += 1.0;
            coef[a * B + n] -= 1.0;
          }
        }
      }
    out.active += active;
    if (active == 0) continue;
    std::sort(hinge.begin(), hinge.end());  // order-independent sum
    double sum = 0.0;
    for (double h : hinge) sum += h;
    total += sum / static_cast<double>(active);
    const double scale = 1.0 / (static_cast<double>(active) * bins);
    for (int i = 0; i < B; ++i)
      for (int j = 0; j < B; ++j) {
        const double c = coef[i * B + j];
        const double d = dist[i * B + j];
        if (c == 0.0 || d == 0.0) continue;
        const double g = c * scale / d;
        for (int k = 0; k < dim; ++k) {
          const double diff = static_cast<double>(emb.data[i * D + off + k]) - emb.data[j * D + off + k];
          out.grad.data[i * D + off + k] += static_cast<T>(g * diff);
          out.grad.data[j * D + off + k] -= static_cast<T>(g * diff);
        }
      }
  }
  out.loss = total / bins;
  return out;
}

template <typename T>
LossGrad<T> ce_identity_loss(const Tensor<T>& emb, const std::vector<int>& labels, Linear<T>& head) {
  if (emb.rank() != 2 || static_cast<std::size_t>(emb.dim(0)) != labels.size())
    throw std::invalid_argument("ce: embeddings and labels differ in length");
  const int B = emb.dim(0), K = head.out_features();
  for (int l : labels)
    if (l < 0 || l >= K) throw std::invalid_argument("ce: label outside head range");

  Tensor<T> logits;
  head.forward(emb, logits);
  Tensor<T> dlogits(logits.shape);
  double total = 0.0;
  for (int b = 0; b < B; ++b) {
    const T* z = logits.ptr() + static_cast<std::size_t>(b) * K;
    double mx = z[0];
    for (int k = 1; k < K; ++k) mx = std::max(mx, static_cast<double>(z[k]));
    double se = 0.0;
    for (int k = 0; k < K; ++k) se += std::exp(z[k] - mx);
    const double lse = mx + std::log(se);
    total += lse - z[labels[b]];
    for (int k = 0; k < K; ++k) {
      const double p = std::exp(z[k] - lse);
      dlogits.data[static_cast<std::size_t>(b) * K + k] =
          static_cast<T>((p - (k == labels[b] ? 1.0 : 0.0)) / B);
    }
  }
  LossGrad<T> out;
  out.loss = total / B;
  head.backward(emb, dlogits, &out.grad);
  return out;
}

template LossGrad<float> triplet_loss<float>(const Tensor<float>&, const std::vector<int>&, int, double);
template LossGrad<double> triplet_loss<double>(const Tensor<double>&, const std::vector<int>&, int, double);
template LossGrad<float> ce_identity_loss<float>(const Tensor<float>&, const std::vector<int>&, Linear<float>&);
template LossGrad<double> ce_identity_loss<double>(const Tensor<double>&, const std::vector<int>&, Linear<double>&);

}  // namespace gait
