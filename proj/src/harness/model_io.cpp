#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "fedfw/harness.hpp"

namespace fedfw {

namespace {

constexpr std::array<char, 8> kMagic = {'F', 'E', 'D', 'F', 'W', 'M', 'D', 'L'};
constexpr std::uint32_t kVersion = 1;

template <typename U>
void put_le(std::vector<unsigned char> &out, U value) {
    for (std::size_t b = 0; b < sizeof(U); ++b) out.push_back(static_cast<unsigned char>(value >> (8 * b)));
}

template <typename U>
U get_le(const std::vector<unsigned char> &in, std::size_t offset) {
    U value = 0;
    for (std::size_t b = 0; b < sizeof(U); ++b) value |= static_cast<U>(in[offset + b]) << (8 * b);
    return value;
}

}  // namespace

void save_model(const std::filesystem::path &path, const Vec &x) {
    std::vector<unsigned char> bytes(kMagic.begin(), kMagic.end());
    put_le<std::uint32_t>(bytes, kVersion);
    put_le<std::uint32_t>(bytes, static_cast<std::uint32_t>(x.size()));
    for (Eigen::Index i = 0; i < x.size(); ++i) put_le<std::uint64_t>(bytes, std::bit_cast<std::uint64_t>(x[i]));

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write model file '" + path.string() + "'");
    out.write(reinterpret_cast<const char *>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw std::runtime_error("short write on model file '" + path.string() + "'");
}

Vec load_model(const std::filesystem::path &path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open model file '" + path.string() + "'");
    const std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

    const std::size_t header = kMagic.size() + 8;
    if (bytes.size() < header || std::memcmp(bytes.data(), kMagic.data(), kMagic.size()) != 0) {
        throw std::runtime_error("'" + path.string() + "' is not a model file");
    }
    const auto version = get_le<std::uint32_t>(bytes, 8);
    if (version != kVersion) throw std::runtime_error("unsupported model file version " + std::to_string(version));
    const auto dim = get_le<std::uint32_t>(bytes, 12);
    if (bytes.size() != header + 8 * static_cast<std::size_t>(dim)) {
        throw std::runtime_error("model file '" + path.string() + "' has the wrong length for dim " +
                                 std::to_string(dim));
    }
    Vec x(static_cast<Eigen::Index>(dim));
    for (std::uint32_t i = 0; i < dim; ++i) x[i] = std::bit_cast<double>(get_le<std::uint64_t>(bytes, header + 8 * i));
    return x;
}

}  // namespace fedfw
