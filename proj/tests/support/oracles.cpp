#include "oracles.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>
#include <functional>
#include <numeric>
#include <set>

namespace oracle {

using skeyspot::BoundingBox;
using skeyspot::Detection;

double raster_iou(const BoundingBox& a, const BoundingBox& b, double step) {
  const double x0 = std::min(a.x_min, b.x_min), y0 = std::min(a.y_min, b.y_min);
  const double x1 = std::max(a.x_max, b.x_max), y1 = std::max(a.y_max, b.y_max);
  const long nx = static_cast<long>(std::ceil((x1 - x0) / step)) + 1;
  const long ny = static_cast<long>(std::ceil((y1 - y0) / step)) + 1;
  // Cell centers on the global lattice (k + 0.5) * step.
  const long kx0 = static_cast<long>(std::floor(x0 / step)) - 1;
  const long ky0 = static_cast<long>(std::floor(y0 / step)) - 1;
  long in_a = 0, in_b = 0, both = 0;
  for (long j = 0; j <= ny + 1; ++j) {
    const double y = (static_cast<double>(ky0 + j) + 0.5) * step;
    const bool ya = y >= a.y_min && y < a.y_max;
    const bool yb = y >= b.y_min && y < b.y_max;
    if (!ya && !yb) continue;
    for (long i = 0; i <= nx + 1; ++i) {
      const double x = (static_cast<double>(kx0 + i) + 0.5) * step;
      const bool pa = ya && x >= a.x_min && x < a.x_max;
      const bool pb = yb && x >= b.x_min && x < b.x_max;
      in_a += pa;
      in_b += pb;
      both += pa && pb;
    }
  }
  const long uni = in_a + in_b - both;
  return uni == 0 ? 0.0 : static_cast<double>(both) / static_cast<double>(uni);
}

namespace {

double plain_iou(const BoundingBox& a, const BoundingBox& b) {
  const double iw = std::min(a.x_max, b.x_max) - std::max(a.x_min, b.x_min);
  const double ih = std::min(a.y_max, b.y_max) - std::max(a.y_min, b.y_min);
  if (iw <= 0 || ih <= 0) return 0.0;
  const double inter = iw * ih;
  const double uni = (a.x_max - a.x_min) * (a.y_max - a.y_min) + (b.x_max - b.x_min) * (b.y_max - b.y_min) - inter;
  return uni <= 0 ? 0.0 : inter / uni;
}

// Priority: higher confidence first, then lower index.
bool before(const std::vector<Detection>& d, std::size_t i, std::size_t j) {
  if (d[i].confidence != d[j].confidence) return d[i].confidence > d[j].confidence;
  return i < j;
}

}  // namespace

std::vector<std::size_t> nms_recursive(const std::vector<Detection>& dets, double threshold) {
  const std::size_t n = dets.size();
  std::vector<int> memo(n, -1);
  std::function<bool(std::size_t)> kept = [&](std::size_t i) -> bool {
    if (memo[i] >= 0) return memo[i] == 1;
    bool k = true;
    for (std::size_t j = 0; j < n && k; ++j) {
      if (j == i || dets[j].class_id != dets[i].class_id || !before(dets, j, i)) continue;
      if (plain_iou(dets[i].box, dets[j].box) >= threshold && kept(j)) k = false;
    }
    memo[i] = k ? 1 : 0;
    return k;
  };
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < n; ++i) {
    if (kept(i)) out.push_back(i);
  }
  std::sort(out.begin(), out.end(), [&](std::size_t a, std::size_t b) { return before(dets, a, b); });
  return out;
}

std::vector<std::vector<std::size_t>> nms_consistent_subsets(const std::vector<Detection>& dets,
                                                             const std::vector<std::size_t>& priority,
                                                             double threshold) {
  const std::size_t m = priority.size();
  std::vector<std::vector<std::size_t>> found;
  for (std::uint64_t mask = 0; mask < (std::uint64_t{1} << m); ++mask) {
    bool ok = true;
    for (std::size_t p = 0; p < m && ok; ++p) {
      bool overlapped_by_member = false;
      for (std::size_t q = 0; q < p; ++q) {
        if ((mask >> q & 1) && plain_iou(dets[priority[p]].box, dets[priority[q]].box) >= threshold) {
          overlapped_by_member = true;
          break;
        }
      }
      const bool member = mask >> p & 1;
      if (member == overlapped_by_member) ok = false;
    }
    if (!ok) continue;
    std::vector<std::size_t> s;
    for (std::size_t p = 0; p < m; ++p) {
      if (mask >> p & 1) s.push_back(priority[p]);
    }
    found.push_back(std::move(s));
  }
  return found;
}

BruteReport brute_force_evaluate(const std::vector<skeyspot::ImagePredictions>& preds,
                                 const skeyspot::DatasetManifest& manifest, const std::vector<double>& thresholds) {
  const std::size_t nc = manifest.registry.size();
  const std::size_t ni = manifest.images.size();
  std::vector<const skeyspot::ImagePredictions*> by_image(ni, nullptr);
  for (const auto& p : preds) {
    for (std::size_t i = 0; i < ni; ++i) {
      if (manifest.images[i].image_id == p.image_id) by_image[i] = &p;
    }
  }

  BruteReport rep;
  rep.classes.resize(nc);
  rep.map_per_threshold.assign(thresholds.size(), 0.0);
  std::size_t present = 0;
  for (std::size_t c = 0; c < nc; ++c) {
    std::size_t gt_total = 0;
    for (const auto& img : manifest.images) {
      for (const auto& g : img.ground_truth) gt_total += static_cast<std::size_t>(g.class_id) == c;
    }
    if (gt_total == 0) continue;
    rep.classes[c].present = true;
    ++present;

    struct Entry {
      double conf;
      std::size_t image, det;
    };
    std::vector<Entry> entries;
    for (std::size_t i = 0; i < ni; ++i) {
      if (!by_image[i]) continue;
      const auto& d = by_image[i]->detections;
      for (std::size_t k = 0; k < d.size(); ++k) {
        if (static_cast<std::size_t>(d[k].class_id) == c) entries.push_back({d[k].confidence, i, k});
      }
    }
    std::stable_sort(entries.begin(), entries.end(), [](const Entry& a, const Entry& b) { return a.conf > b.conf; });

    for (std::size_t t = 0; t < thresholds.size(); ++t) {
      std::set<std::pair<std::size_t, std::size_t>> claimed;
      std::vector<double> rec, prec;
      std::size_t tp = 0;
      for (std::size_t e = 0; e < entries.size(); ++e) {
        const auto& img = manifest.images[entries[e].image];
        const auto& box = by_image[entries[e].image]->detections[entries[e].det].box;
        std::optional<std::size_t> best;
        double best_iou = 0.0;
        for (std::size_t g = 0; g < img.ground_truth.size(); ++g) {
          if (static_cast<std::size_t>(img.ground_truth[g].class_id) != c) continue;
          if (claimed.count({entries[e].image, g})) continue;
          const double v = plain_iou(box, img.ground_truth[g].box);
          if (v < thresholds[t]) continue;
          if (!best || v > best_iou) {
            best = g;
            best_iou = v;
          }
        }
        if (best) {
          claimed.insert({entries[e].image, *best});
          ++tp;
        }
        rec.push_back(static_cast<double>(tp) / static_cast<double>(gt_total));
        prec.push_back(static_cast<double>(tp) / static_cast<double>(e + 1));
      }
      double sum = 0.0;
      for (int k = 0; k <= 100; ++k) {
        const double r = k / 100.0;
        double p = 0.0;
        for (std::size_t j = 0; j < rec.size(); ++j) {
          if (rec[j] >= r) p = std::max(p, prec[j]);
        }
        sum += p;
      }
      rep.classes[c].ap.push_back(sum / 101.0);
    }
    for (std::size_t t = 0; t < thresholds.size(); ++t) rep.map_per_threshold[t] += rep.classes[c].ap[t];
  }
  for (double& v : rep.map_per_threshold) v /= static_cast<double>(present);

  auto index_of = [&](double t) {
    for (std::size_t i = 0; i < thresholds.size(); ++i) {
      if (std::abs(thresholds[i] - t) < 1e-9) return i;
    }
    return thresholds.size();
  };
  const std::size_t i50 = index_of(0.5), i75 = index_of(0.75);
  for (const auto& cls : rep.classes) {
    if (!cls.present) continue;
    if (i50 < thresholds.size()) rep.map50 += cls.ap[i50] / static_cast<double>(present);
    if (i75 < thresholds.size()) rep.map75 += cls.ap[i75] / static_cast<double>(present);
    rep.map50_95 += std::accumulate(cls.ap.begin(), cls.ap.end(), 0.0) / static_cast<double>(cls.ap.size()) /
                    static_cast<double>(present);
  }
  return rep;
}

std::string decimal_total(const std::vector<std::pair<std::uint64_t, std::string>>& count_rate_pairs) {
  __int128 total = 0;  // hundredths
  for (const auto& [count, rate] : count_rate_pairs) {
    const auto dot = rate.find('.');
    const std::string whole = rate.substr(0, dot);
    std::string frac = dot == std::string::npos ? "" : rate.substr(dot + 1);
    frac.resize(2, '0');
    __int128 cents = 0;
    for (char ch : whole + frac) cents = cents * 10 + (ch - '0');
    total += cents * static_cast<__int128>(count);
  }
  const bool neg = total < 0;
  if (neg) total = -total;
  std::string digits;
  do {
    digits.insert(digits.begin(), static_cast<char>('0' + static_cast<int>(total % 10)));
    total /= 10;
  } while (total > 0);
  while (digits.size() < 3) digits.insert(digits.begin(), '0');
  return (neg ? "-" : "") + digits.substr(0, digits.size() - 2) + "." + digits.substr(digits.size() - 2);
}

std::uint32_t crc32_reference(const std::string& data) {
  std::uint32_t crc = 0xffffffffu;
  for (unsigned char byte : data) {
    crc ^= byte;
    for (int k = 0; k < 8; ++k) crc = (crc >> 1) ^ (0xedb88320u & (0u - (crc & 1u)));
  }
  return ~crc;
}

namespace {

std::uint32_t rd32(const std::string& s, std::size_t off) {
  std::uint32_t v = 0;
  for (int i = 3; i >= 0; --i) v = (v << 8) | static_cast<unsigned char>(s[off + static_cast<std::size_t>(i)]);
  return v;
}

std::uint16_t rd16(const std::string& s, std::size_t off) {
  return static_cast<std::uint16_t>(static_cast<unsigned char>(s[off]) |
                                    (static_cast<unsigned char>(s[off + 1]) << 8));
}

}  // namespace

std::optional<std::vector<ZipFile>> read_stored_zip(const std::string& bytes) {
  if (bytes.size() < 22) return std::nullopt;
  const std::size_t eocd = bytes.size() - 22;
  if (rd32(bytes, eocd) != 0x06054b50) return std::nullopt;
  const std::uint16_t count = rd16(bytes, eocd + 10);
  const std::uint32_t cd_size = rd32(bytes, eocd + 12);
  std::size_t p = rd32(bytes, eocd + 16);
  if (p + cd_size != eocd) return std::nullopt;

  std::vector<ZipFile> files;
  for (std::uint16_t i = 0; i < count; ++i) {
    if (p + 46 > eocd || rd32(bytes, p) != 0x02014b50) return std::nullopt;
    if (rd16(bytes, p + 10) != 0) return std::nullopt;  // must be stored
    ZipFile f;
    f.dos_time = rd16(bytes, p + 12);
    f.dos_date = rd16(bytes, p + 14);
    f.crc = rd32(bytes, p + 16);
    const std::uint32_t csize = rd32(bytes, p + 20), usize = rd32(bytes, p + 24);
    const std::uint16_t nlen = rd16(bytes, p + 28), xlen = rd16(bytes, p + 30), clen = rd16(bytes, p + 32);
    const std::uint32_t local = rd32(bytes, p + 42);
    f.name = bytes.substr(p + 46, nlen);
    p += 46u + nlen + xlen + clen;
    if (csize != usize) return std::nullopt;

    if (local + 30 > bytes.size() || rd32(bytes, local) != 0x04034b50) return std::nullopt;
    const std::uint16_t lnlen = rd16(bytes, local + 26), lxlen = rd16(bytes, local + 28);
    if (bytes.compare(local + 30, lnlen, f.name) != 0) return std::nullopt;
    if (rd32(bytes, local + 14) != f.crc || rd32(bytes, local + 18) != csize) return std::nullopt;
    const std::size_t data_off = local + 30u + lnlen + lxlen;
    if (data_off + csize > bytes.size()) return std::nullopt;
    f.data = bytes.substr(data_off, csize);
    if (crc32_reference(f.data) != f.crc) return std::nullopt;
    files.push_back(std::move(f));
  }
  return files;
}

std::string sha256_reference(const std::string& data) {
  static constexpr std::array<std::uint32_t, 64> k = {
      0x428a2f98, 0x71374491, 0xb5c0fbcf, 0xe9b5dba5, 0x3956c25b, 0x59f111f1, 0x923f82a4, 0xab1c5ed5,
      0xd807aa98, 0x12835b01, 0x243185be, 0x550c7dc3, 0x72be5d74, 0x80deb1fe, 0x9bdc06a7, 0xc19bf174,
      0xe49b69c1, 0xefbe4786, 0x0fc19dc6, 0x240ca1cc, 0x2de92c6f, 0x4a7484aa, 0x5cb0a9dc, 0x76f988da,
      0x983e5152, 0xa831c66d, 0xb00327c8, 0xbf597fc7, 0xc6e00bf3, 0xd5a79147, 0x06ca6351, 0x14292967,
      0x27b70a85, 0x2e1b2138, 0x4d2c6dfc, 0x53380d13, 0x650a7354, 0x766a0abb, 0x81c2c92e, 0x92722c85,
      0xa2bfe8a1, 0xa81a664b, 0xc24b8b70, 0xc76c51a3, 0xd192e819, 0xd6990624, 0xf40e3585, 0x106aa070,
      0x19a4c116, 0x1e376c08, 0x2748774c, 0x34b0bcb5, 0x391c0cb3, 0x4ed8aa4a, 0x5b9cca4f, 0x682e6ff3,
      0x748f82ee, 0x78a5636f, 0x84c87814, 0x8cc70208, 0x90befffa, 0xa4506ceb, 0xbef9a3f7, 0xc67178f2};
  std::array<std::uint32_t, 8> h = {0x6a09e667, 0xbb67ae85, 0x3c6ef372, 0xa54ff53a,
                                    0x510e527f, 0x9b05688c, 0x1f83d9ab, 0x5be0cd19};
  auto rotr = [](std::uint32_t x, int n) { return (x >> n) | (x << (32 - n)); };

  std::string msg = data;
  const std::uint64_t bit_len = static_cast<std::uint64_t>(data.size()) * 8;
  msg.push_back(static_cast<char>(0x80));
  while (msg.size() % 64 != 56) msg.push_back('\0');
  for (int i = 7; i >= 0; --i) msg.push_back(static_cast<char>((bit_len >> (8 * i)) & 0xff));

  for (std::size_t chunk = 0; chunk < msg.size(); chunk += 64) {
    std::array<std::uint32_t, 64> w{};
    for (int i = 0; i < 16; ++i) {
      const auto* b = reinterpret_cast<const unsigned char*>(msg.data() + chunk + 4 * static_cast<std::size_t>(i));
      w[i] = (std::uint32_t{b[0]} << 24) | (std::uint32_t{b[1]} << 16) | (std::uint32_t{b[2]} << 8) | b[3];
    }
    for (int i = 16; i < 64; ++i) {
      const std::uint32_t s0 = rotr(w[i - 15], 7) ^ rotr(w[i - 15], 18) ^ (w[i - 15] >> 3);
      const std::uint32_t s1 = rotr(w[i - 2], 17) ^ rotr(w[i - 2], 19) ^ (w[i - 2] >> 10);
      w[i] = w[i - 16] + s0 + w[i - 7] + s1;
    }
    auto [a, b, c, d, e, f, g, hh] = h;
    for (int i = 0; i < 64; ++i) {
      const std::uint32_t S1 = rotr(e, 6) ^ rotr(e, 11) ^ rotr(e, 25);
      const std::uint32_t ch = (e & f) ^ (~e & g);
      const std::uint32_t t1 = hh + S1 + ch + k[i] + w[i];
      const std::uint32_t S0 = rotr(a, 2) ^ rotr(a, 13) ^ rotr(a, 22);
      const std::uint32_t maj = (a & b) ^ (a & c) ^ (b & c);
      const std::uint32_t t2 = S0 + maj;
      hh = g;
      g = f;
      f = e;
      e = d + t1;
      d = c;
      c = b;
      b = a;
      a = t1 + t2;
    }
    h[0] += a; h[1] += b; h[2] += c; h[3] += d;
    h[4] += e; h[5] += f; h[6] += g; h[7] += hh;
  }
  std::string out;
  char buf[9];
  for (auto v : h) {
    std::snprintf(buf, sizeof buf, "%08x", v);
    out += buf;
  }
  return out;
}

}  // namespace oracle
