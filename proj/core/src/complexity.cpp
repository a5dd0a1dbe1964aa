#include "ecn/complexity.hpp"

#include <cstdio>
#include <sstream>

namespace ecn {

std::uint64_t conv_flops(std::uint64_t h_out, std::uint64_t w_out, std::uint64_t c_in_per_group,
                         std::uint64_t k, std::uint64_t c_out, bool bias) {
  return 2 * h_out * w_out * (c_in_per_group * k * k + (bias ? 1 : 0)) * c_out;
}

std::uint64_t conv_params(std::uint64_t c_in_per_group, std::uint64_t k, std::uint64_t c_out,
                          bool bias) {
  return (c_in_per_group * k * k + (bias ? 1 : 0)) * c_out;
}

std::uint64_t ComplexityReport::layer_params(std::string_view layer) const {
  std::uint64_t total = 0;
  for (const ComplexityRow& r : rows) {
    if (r.layer == layer) total += r.params;
  }
  return total;
}

std::uint64_t ComplexityReport::layer_flops(std::string_view layer) const {
  std::uint64_t total = 0;
  for (const ComplexityRow& r : rows) {
    if (r.layer == layer) total += r.flops;
  }
  return total;
}

namespace {

class RowSink {
 public:
  RowSink(ComplexityReport& report, std::string layer) : report_(report), layer_(std::move(layer)) {}

  void conv(const std::string& name, std::uint64_t h_out, std::uint64_t w_out, std::uint64_t c_in,
            std::uint64_t k, std::uint64_t c_out, std::uint64_t groups = 1, bool bias = true) {
    push(name, "conv", conv_flops(h_out, w_out, c_in / groups, k, c_out, bias),
         conv_params(c_in / groups, k, c_out, bias));
  }
  void conv(const ConvLayer& c, std::uint64_t h_out, std::uint64_t w_out) {
    conv(c.name, h_out, w_out, c.c_in, c.kernel, c.c_out, c.groups, c.bias);
  }
  void dense(const std::string& name, std::uint64_t tokens, std::uint64_t din, std::uint64_t dout) {
    push(name, "dense", 2 * tokens * (din + 1) * dout, (din + 1) * dout);
  }
  void push(const std::string& name, const char* op, std::uint64_t flops, std::uint64_t params) {
    report_.rows.push_back({layer_, name, op, flops, params});
  }

 private:
  ComplexityReport& report_;
  std::string layer_;
};

}  // namespace

ComplexityReport analyze_complexity(const ArchSpec& spec) {
  ComplexityReport report;
  report.input = {1, spec.input.channels, spec.input.height, spec.input.width};
  for (const LayerTrace& t : trace_spec(spec, false)) {
    if (!t.active) continue;
    const LayerDecl& l = *t.decl;
    const std::string& nm = l.name;
    RowSink sink(report, nm);
    const std::uint64_t h = t.in.h;
    const std::uint64_t w = t.in.w;
    switch (l.kind) {
      case LayerKind::dsc: {
        DscBlock b(nm, t.in.c, l.c_out, l.stride);
        sink.conv(b.depthwise(), t.out.h, t.out.w);
        sink.conv(b.pointwise(), t.out.h, t.out.w);
        sink.push(nm + ".bn", "norm", 0, 2 * l.c_out);
        break;
      }
      case LayerKind::eem: {
        EemBlock b(nm, t.in.c, l.eem);
        sink.push(nm + ".dog", "stencil", 2 * h * w * 9 * t.in.c, 0);
        sink.push(nm + ".log", "stencil", 2 * h * w * 9 * t.in.c, 0);
        sink.conv(b.dog_proj(), h, w);
        sink.conv(b.log_proj(), h, w);
        sink.conv(b.fuse(), h, w);
        sink.conv(b.sem().squeeze(), 1, 1);
        sink.conv(b.sem().excite(), 1, 1);
        sink.conv(b.skip_proj(), h, w);
        break;
      }
      case LayerKind::ulsam: {
        UlsamBlock b(nm, t.in.c, l.ulsam);
        sink.conv(b.depthwise(), h, w);
        sink.conv(b.pointwise(), h, w);
        break;
      }
      case LayerKind::mobilevit: {
        MobileVitBlock b(nm, t.in.c, l.mobilevit);
        const MobileVitConfig& c = l.mobilevit;
        const std::uint64_t tokens = h * w;  // P * N
        const std::uint64_t n = h * w / (c.patch_h * c.patch_w);
        const std::uint64_t rows = c.patch_h * c.patch_w;
        sink.conv(b.local(), h, w);
        sink.conv(b.to_tokens(), h, w);
        for (const TransformerLayer& tl : b.layers()) {
          const std::string base = nm + ".t" + std::to_string(&tl - b.layers().data());
          const std::uint64_t d = tl.dim();
          const std::uint64_t dh = d / tl.heads();
          sink.push(base + ".ln1", "norm", 0, 2 * d);
          sink.dense(base + ".q", tokens, d, d);
          sink.dense(base + ".k", tokens, d, d);
          sink.dense(base + ".v", tokens, d, d);
          sink.push(base + ".qk", "attention", 2 * rows * tl.heads() * n * n * dh, 0);
          sink.push(base + ".av", "attention", 2 * rows * tl.heads() * n * n * dh, 0);
          sink.dense(base + ".o", tokens, d, d);
          sink.push(base + ".ln2", "norm", 0, 2 * d);
          sink.dense(base + ".fc1", tokens, d, tl.hidden());
          sink.dense(base + ".fc2", tokens, tl.hidden(), d);
        }
        sink.conv(b.from_tokens(), h, w);
        sink.conv(b.fusion(), h, w);
        break;
      }
      case LayerKind::upsample:
      case LayerKind::concat_skip:
        break;
      case LayerKind::conv:
        sink.conv(nm, t.out.h, t.out.w, t.in.c, l.kernel, l.c_out);
        break;
      case LayerKind::head:
        sink.conv(nm, h, w, t.in.c, 1, l.c_out);
        break;
    }
  }
  for (const ComplexityRow& r : report.rows) {
    report.total_flops += r.flops;
    report.total_params += r.params;
  }
  return report;
}

BudgetCheck check_budget(const ComplexityReport& report, const BudgetBand& band) {
  BudgetCheck c;
  c.params_ok = report.total_params >= band.params_min && report.total_params <= band.params_max;
  c.flops_ok = report.total_flops >= band.flops_min && report.total_flops <= band.flops_max;
  return c;
}

std::string format_table(const ComplexityReport& report, const BudgetBand& band) {
  std::ostringstream os;
  os << "# input " << report.input.c << "x" << report.input.h << "x" << report.input.w << ", batch 1\n"
     << "# conv: FLOPs = 2*Ho*Wo*(Cin/g*K^2+b)*Cout, params = (Cin/g*K^2+b)*Cout\n"
     << "# dense: 2*T*(din+1)*dout; attention: 2*rows*heads*N^2*dh per matmul\n"
     << "# stencil: 2*H*W*9*C, fixed weights; norm/activation/pool/softmax/upsample/add: 0 FLOPs\n";
  char line[256];
  std::snprintf(line, sizeof line, "%-28s %-10s %16s %12s\n", "name", "op", "flops", "params");
  os << line;
  for (const ComplexityRow& r : report.rows) {
    std::snprintf(line, sizeof line, "%-28s %-10s %16llu %12llu\n", r.name.c_str(), r.op.c_str(),
                  static_cast<unsigned long long>(r.flops), static_cast<unsigned long long>(r.params));
    os << line;
  }
  std::snprintf(line, sizeof line, "%-28s %-10s %16llu %12llu\n", "total", "",
                static_cast<unsigned long long>(report.total_flops),
                static_cast<unsigned long long>(report.total_params));
  os << line;
  std::snprintf(line, sizeof line, "total_params_m=%.4f total_gflops=%.4f\n",
                static_cast<double>(report.total_params) / 1e6,
                static_cast<double>(report.total_flops) / 1e9);
  os << line;
  const BudgetCheck c = check_budget(report, band);
  std::snprintf(line, sizeof line, "params_band=[%.2fM,%.2fM] %s\nflops_band=[%.2fG,%.2fG] %s\n",
                band.params_min / 1e6, band.params_max / 1e6, c.params_ok ? "within" : "OUTSIDE",
                band.flops_min / 1e9, band.flops_max / 1e9, c.flops_ok ? "within" : "OUTSIDE");
  os << line;
  return os.str();
}

std::string format_csv(const ComplexityReport& report) {
  std::ostringstream os;
  os << "layer,name,op,flops,params\n";
  for (const ComplexityRow& r : report.rows) {
    os << r.layer << ',' << r.name << ',' << r.op << ',' << r.flops << ',' << r.params << '\n';
  }
  os << "total,total,," << report.total_flops << ',' << report.total_params << '\n';
  return os.str();
}

}  // namespace ecn
