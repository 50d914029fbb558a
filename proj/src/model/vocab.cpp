#include "sage/model/vocab.hpp"

#include <algorithm>
#include <cctype>
#include <sstream>
#include <stdexcept>

#include "sage/common/kv.hpp"

namespace sage::model {

Vocabulary::Vocabulary(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
    for (std::size_t i = 0; i < tokens_.size(); ++i) {
        const auto& t = tokens_[i];
        if (t.empty()) throw std::invalid_argument("vocabulary: empty token at line " + std::to_string(i + 1));
        if (t.find_first_of(" \t\r\n") != std::string::npos) {
            throw std::invalid_argument("vocabulary: token '" + t + "' contains whitespace");
        }
        if (!index_.emplace(t, static_cast<int>(i)).second) {
            throw std::invalid_argument("vocabulary: duplicate token '" + t + "'");
        }
    }
}

Vocabulary Vocabulary::parse(const std::string& text) {
    std::vector<std::string> tokens;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        tokens.push_back(line);
    }
    return Vocabulary(std::move(tokens));
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) { return parse(read_text_file(path)); }

std::string Vocabulary::serialize() const {
    std::string out;
    for (const auto& t : tokens_) out += t + '\n';
    return out;
}

void Vocabulary::save(const std::filesystem::path& path) const { write_text_file(path, serialize()); }

const std::string& Vocabulary::token(int id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
        throw std::invalid_argument("vocabulary: id " + std::to_string(id) + " out of range");
    }
    return tokens_[static_cast<std::size_t>(id)];
}

int Vocabulary::id(const std::string& token) const {
    auto it = index_.find(token);
    if (it == index_.end()) throw std::invalid_argument("vocabulary: unknown token '" + token + "'");
    return it->second;
}

std::vector<int> Vocabulary::encode(const std::vector<std::string>& tokens) const {
    std::vector<int> ids;
    ids.reserve(tokens.size());
    for (const auto& t : tokens) ids.push_back(id(t));
    return ids;
}

std::vector<std::string> Vocabulary::decode(const std::vector<int>& ids) const {
    std::vector<std::string> out;
    out.reserve(ids.size());
    for (int i : ids) out.push_back(token(i));
    return out;
}

std::vector<double> surface_features(const std::string& token) {
    auto any = [&](auto pred) { return std::any_of(token.begin(), token.end(), pred) ? 1.0 : 0.0; };
    auto all = [&](auto pred) { return !token.empty() && std::all_of(token.begin(), token.end(), pred) ? 1.0 : 0.0; };
    const auto uc = [](char c) { return static_cast<unsigned char>(c); };

    std::vector<double> f(kSurfaceFeatures, 0.0);
    f[0] = all([&](char c) { return std::ispunct(uc(c)) != 0; });
    f[1] = any([](char c) { return std::string_view("{}()[]<>").find(c) != std::string_view::npos; });
    f[2] = any([](char c) { return c == '_'; });
    f[3] = token.size() > 1 && std::any_of(token.begin() + 1, token.end(), [&](char c) { return std::isupper(uc(c)); })
               ? 1.0
               : 0.0;
    f[4] = any([&](char c) { return std::isdigit(uc(c)) != 0; });
    f[5] = all([&](char c) { return std::islower(uc(c)) != 0; });
    f[6] = any([](char c) { return std::string_view("=+-*/%!&|^~;:").find(c) != std::string_view::npos; });
    f[7] = any([](char c) { return c == '.'; });
    f[8] = std::min(static_cast<double>(token.size()), 12.0) / 12.0;
    f[9] = 1.0;
    return f;
}

ad::Tensor surface_feature_table(const Vocabulary& vocab) {
    ad::Tensor table({vocab.size(), kSurfaceFeatures});
    for (std::size_t i = 0; i < vocab.size(); ++i) {
        auto f = surface_features(vocab.tokens()[i]);
        for (std::size_t j = 0; j < kSurfaceFeatures; ++j) table.at(i, j) = f[j];
    }
    return table;
}

}  // namespace sage::model
