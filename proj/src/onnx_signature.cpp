#include "skeyspot/onnx_signature.hpp"

#include <set>

namespace skeyspot {

namespace {

// Minimal protobuf wire-format cursor.
class Reader {
 public:
  explicit Reader(std::string_view bytes) : data_(bytes) {}

  bool done() const { return pos_ >= data_.size(); }

  bool varint(std::uint64_t& out) {
    out = 0;
    for (int shift = 0; shift < 64; shift += 7) {
      if (pos_ >= data_.size()) return false;
      const auto byte = static_cast<unsigned char>(data_[pos_++]);
      out |= static_cast<std::uint64_t>(byte & 0x7f) << shift;
      if ((byte & 0x80) == 0) return true;
    }
    return false;
  }

  // Reads a tag; `len` gets the payload for wire type 2, other types are skipped.
  bool next(std::uint32_t& field, std::uint32_t& wire, std::string_view& len, std::uint64_t& value) {
    std::uint64_t key = 0;
    if (!varint(key)) return false;
    field = static_cast<std::uint32_t>(key >> 3);
    wire = static_cast<std::uint32_t>(key & 7);
    switch (wire) {
      case 0:
        return varint(value);
      case 1:
        return skip(8);
      case 5:
        return skip(4);
      case 2: {
        std::uint64_t n = 0;
        if (!varint(n) || n > data_.size() - pos_) return false;
        len = data_.substr(pos_, n);
        pos_ += n;
        return true;
      }
      default:
        return false;
    }
  }

 private:
  bool skip(std::size_t n) {
    if (n > data_.size() - pos_) return false;
    pos_ += n;
    return true;
  }

  std::string_view data_;
  std::size_t pos_ = 0;
};

template <typename F>
bool for_each_field(std::string_view bytes, F&& f) {
  Reader r(bytes);
  while (!r.done()) {
    std::uint32_t field = 0, wire = 0;
    std::string_view len;
    std::uint64_t value = 0;
    if (!r.next(field, wire, len, value)) return false;
    f(field, wire, len, value);
  }
  return true;
}

std::optional<OnnxInputSignature> parse_value_info(std::string_view bytes) {
  OnnxInputSignature sig;
  bool has_tensor = false;
  bool ok = for_each_field(bytes, [&](auto field, auto wire, std::string_view len, auto) {
    if (wire != 2) return;
    if (field == 1) sig.name = std::string(len);
    if (field != 2) return;
    for_each_field(len, [&](auto f_type, auto w_type, std::string_view tensor, auto) {
      if (f_type != 1 || w_type != 2) return;
      has_tensor = true;
      for_each_field(tensor, [&](auto f_t, auto w_t, std::string_view shape, std::uint64_t v) {
        if (f_t == 1 && w_t == 0) sig.elem_type = static_cast<int>(v);
        if (f_t != 2 || w_t != 2) return;
        for_each_field(shape, [&](auto f_s, auto w_s, std::string_view dim, auto) {
          if (f_s != 1 || w_s != 2) return;
          std::int64_t d = -1;
          for_each_field(dim, [&](auto f_d, auto w_d, auto, std::uint64_t dv) {
            if (f_d == 1 && w_d == 0) d = static_cast<std::int64_t>(dv);
          });
          sig.dims.push_back(d > 0 ? d : -1);
        });
      });
    });
  });
  if (!ok || !has_tensor) return std::nullopt;
  return sig;
}

}  // namespace

std::optional<OnnxInputSignature> read_onnx_input_signature(std::string_view model_bytes) {
  std::string_view graph;
  bool found = false;
  if (!for_each_field(model_bytes, [&](auto field, auto wire, std::string_view len, auto) {
        if (field == 7 && wire == 2) {
          graph = len;
          found = true;
        }
      }) ||
      !found) {
    return std::nullopt;
  }

  std::vector<std::string_view> inputs;
  std::set<std::string> initializers;
  for_each_field(graph, [&](auto field, auto wire, std::string_view len, auto) {
    if (wire != 2) return;
    if (field == 11) inputs.push_back(len);
    if (field == 5) {
      for_each_field(len, [&](auto f, auto w, std::string_view name, auto) {
        if (f == 8 && w == 2) initializers.emplace(name);
      });
    }
  });
  for (auto in : inputs) {
    auto sig = parse_value_info(in);
    if (sig && !initializers.contains(sig->name)) return sig;
  }
  return std::nullopt;
}

}  // namespace skeyspot
