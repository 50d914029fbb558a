#include "sage/ad/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace sage::ad {

namespace {

constexpr const char* kMagic = "sage-checkpoint";

std::uint64_t to_little(std::uint64_t v) {
    if constexpr (std::endian::native == std::endian::big) {
        std::uint64_t r = 0;
        for (int i = 0; i < 8; ++i) r |= ((v >> (8 * i)) & 0xffu) << (8 * (7 - i));
        return r;
    }
    return v;
}

}  // namespace

void write_checkpoint(std::ostream& out, const std::vector<NamedTensor>& tensors) {
    out << kMagic << " 1\n" << "tensors " << tensors.size() << '\n';
    for (const auto& t : tensors) {
        if (t.name.empty() || t.name.find_first_of(" \t\n") != std::string::npos) {
            throw std::invalid_argument("checkpoint: invalid tensor name '" + t.name + "'");
        }
        out << t.name << ' ' << t.tensor.rank();
        for (auto d : t.tensor.shape()) out << ' ' << d;
        out << '\n';
    }
    out << "data\n";
    for (const auto& t : tensors) {
        for (double v : t.tensor.data()) {
            const std::uint64_t bits = to_little(std::bit_cast<std::uint64_t>(v));
            char buf[8];
            std::memcpy(buf, &bits, 8);
            out.write(buf, 8);
        }
    }
    if (!out) throw std::runtime_error("checkpoint: write failed");
}

std::vector<NamedTensor> read_checkpoint(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("checkpoint: empty stream");
    {
        std::istringstream hs(line);
        std::string magic;
        int version = 0;
        hs >> magic >> version;
        if (magic != kMagic || version != 1) throw std::runtime_error("checkpoint: bad header '" + line + "'");
    }
    std::size_t count = 0;
    {
        if (!std::getline(in, line)) throw std::runtime_error("checkpoint: truncated manifest");
        std::istringstream cs(line);
        std::string key;
        cs >> key >> count;
        if (key != "tensors" || !cs) throw std::runtime_error("checkpoint: bad tensor count line");
    }
    std::vector<NamedTensor> result;
    result.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        if (!std::getline(in, line)) throw std::runtime_error("checkpoint: truncated manifest");
        std::istringstream ls(line);
        NamedTensor nt;
        std::size_t rank = 0;
        ls >> nt.name >> rank;
        Shape shape(rank);
        for (auto& d : shape) ls >> d;
        if (!ls) throw std::runtime_error("checkpoint: bad manifest line '" + line + "'");
        nt.tensor = Tensor(shape);
        result.push_back(std::move(nt));
    }
    if (!std::getline(in, line) || line != "data") throw std::runtime_error("checkpoint: missing data marker");
    for (auto& nt : result) {
        for (double& v : nt.tensor.data()) {
            char buf[8];
            if (!in.read(buf, 8)) throw std::runtime_error("checkpoint: truncated data for " + nt.name);
            std::uint64_t bits = 0;
            std::memcpy(&bits, buf, 8);
            v = std::bit_cast<double>(to_little(bits));
        }
    }
    return result;
}

void save_checkpoint(const std::filesystem::path& path, const std::vector<NamedTensor>& tensors) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("checkpoint: cannot open " + path.string() + " for writing");
    write_checkpoint(out, tensors);
}

std::vector<NamedTensor> load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("checkpoint: cannot open " + path.string());
    return read_checkpoint(in);
}

}  // namespace sage::ad
