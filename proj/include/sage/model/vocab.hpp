#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <unordered_map>
#include <vector>

#include "sage/ad/tensor.hpp"

namespace sage::model {

// Line-delimited token vocabulary; the line index is the token id.
class Vocabulary {
public:
    Vocabulary() = default;
    explicit Vocabulary(std::vector<std::string> tokens);

    static Vocabulary parse(const std::string& text);
    static Vocabulary load(const std::filesystem::path& path);
    std::string serialize() const;
    void save(const std::filesystem::path& path) const;

    std::size_t size() const noexcept { return tokens_.size(); }
    const std::string& token(int id) const;
    int id(const std::string& token) const;  // throws if unknown
    bool contains(const std::string& token) const { return index_.count(token) != 0; }

    std::vector<int> encode(const std::vector<std::string>& tokens) const;
    std::vector<std::string> decode(const std::vector<int>& ids) const;

    const std::vector<std::string>& tokens() const noexcept { return tokens_; }

private:
    std::vector<std::string> tokens_;
    std::unordered_map<std::string, int> index_;
};

// Surface features of a token string used by the NL/code mode classifier.
inline constexpr std::size_t kSurfaceFeatures = 10;
std::vector<double> surface_features(const std::string& token);
// size() x kSurfaceFeatures feature table.
ad::Tensor surface_feature_table(const Vocabulary& vocab);

}  // namespace sage::model
