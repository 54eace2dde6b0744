#include "lrd/layer.hpp"

#include <stdexcept>

namespace lrd {

std::size_t LayerSpec::output_hw() const {
  if (kind == LayerKind::linear) return 1;
  const std::size_t padded = input_hw + 2 * padding;
  if (padded < kernel) throw std::invalid_argument("layer '" + name + "': kernel larger than padded input");
  return (padded - kernel) / stride + 1;
}

void LayerSpec::validate() const {
  auto fail = [&](const std::string& what) { throw std::invalid_argument("layer '" + name + "': " + what); };
  if (in_channels < 1 || out_channels < 1) fail("channel counts must be >= 1");
  if (kernel < 1) fail("kernel must be >= 1");
  if (stride < 1) fail("stride must be >= 1");
  if (groups < 1 || in_channels % groups != 0 || out_channels % groups != 0) {
    fail("groups must divide both channel counts");
  }
  if (kind == LayerKind::linear && (kernel != 1 || stride != 1 || padding != 0 || groups != 1)) {
    fail("linear layers take kernel 1, stride 1, padding 0, groups 1");
  }
  if (kind == LayerKind::conv && input_hw < 1) fail("input_hw must be >= 1");
  (void)output_hw();
}

const char* to_string(LayerKind kind) { return kind == LayerKind::conv ? "conv" : "linear"; }

const char* to_string(Link link) {
  switch (link) {
    case Link::direct:
      return "direct";
    case Link::foldable:
      return "foldable";
    case Link::barrier:
      break;
  }
  return "barrier";
}

}  // namespace lrd
