#include "ecn/metrics.hpp"

#include <cstdio>
#include <sstream>

#include "ecn/errors.hpp"

namespace ecn {

template <typename T>
Tensor<T> binarize(const Tensor<T>& prob, double threshold) {
  Tensor<T> out(prob.shape());
  for (std::size_t i = 0; i < prob.numel(); ++i) {
    out[i] = static_cast<double>(prob[i]) >= threshold ? T(1) : T(0);
  }
  return out;
}

template <typename T>
ConfusionCounts confusion(const Tensor<T>& pred, const Tensor<T>& target) {
  if (!(pred.shape() == target.shape())) {
    throw DimensionError("confusion", "shape", pred.shape().str() + " vs " + target.shape().str());
  }
  ConfusionCounts c;
  for (std::size_t i = 0; i < pred.numel(); ++i) {
    const T p = pred[i];
    const T g = target[i];
    if ((p != T(0) && p != T(1)) || (g != T(0) && g != T(1))) {
      throw UsageError("confusion: inputs must be binary masks");
    }
    if (p == T(1)) {
      (g == T(1) ? c.tp : c.fp) += 1;
    } else {
      (g == T(1) ? c.fn : c.tn) += 1;
    }
  }
  return c;
}

namespace {

Score ratio(std::uint64_t num, std::uint64_t den) {
  if (den == 0) return {0.0, false};
  return {static_cast<double>(num) / static_cast<double>(den), true};
}

}  // namespace

MetricsRecord metrics(const ConfusionCounts& c) {
  MetricsRecord m;
  m.counts = c;
  m.re = ratio(c.tp, c.tp + c.fn);
  m.pr = ratio(c.tp, c.tp + c.fp);
  if (m.re.value + m.pr.value > 0.0) {
    m.f1 = {2.0 * m.re.value * m.pr.value / (m.re.value + m.pr.value), true};
  } else {
    m.f1 = {0.0, false};
  }
  m.iou_crack = ratio(c.tp, c.tp + c.fp + c.fn);
  m.iou_background = ratio(c.tn, c.tn + c.fn + c.fp);
  m.miou = (m.iou_crack.value + m.iou_background.value) / 2.0;
  return m;
}

std::string format_metrics(const MetricsRecord& m) {
  std::ostringstream os;
  char buf[64];
  auto score = [&](const char* key, const Score& s) {
    std::snprintf(buf, sizeof buf, "%.6f", s.value);
    os << key << '=' << buf << '\n';
    if (!s.defined) os << key << "_undefined=1\n";
  };
  os << "tp=" << m.counts.tp << "\nfp=" << m.counts.fp << "\nfn=" << m.counts.fn
     << "\ntn=" << m.counts.tn << '\n';
  score("re", m.re);
  score("pr", m.pr);
  score("f1", m.f1);
  score("iou_crack", m.iou_crack);
  score("iou_background", m.iou_background);
  std::snprintf(buf, sizeof buf, "%.6f", m.miou);
  os << "miou=" << buf << '\n';
  return os.str();
}

template Tensor<float> binarize<float>(const Tensor<float>&, double);
template Tensor<double> binarize<double>(const Tensor<double>&, double);
template ConfusionCounts confusion<float>(const Tensor<float>&, const Tensor<float>&);
template ConfusionCounts confusion<double>(const Tensor<double>&, const Tensor<double>&);

}  // namespace ecn
