#pragma once

#include <string>
#include <vector>

namespace ragpipe {

// Token segmentation used for passage boundaries and token-level embeddings.
// Implementations must be deterministic.
class Tokenizer {
public:
    virtual ~Tokenizer() = default;
    virtual std::vector<std::string> tokenize(const std::string& text) const = 0;
    virtual std::string detokenize(const std::vector<std::string>& tokens) const = 0;
};

// Splits on runs of ASCII whitespace; detokenizes with single spaces.
class WhitespaceTokenizer final : public Tokenizer {
public:
    std::vector<std::string> tokenize(const std::string& text) const override;
    std::string detokenize(const std::vector<std::string>& tokens) const override;
};

}  // namespace ragpipe
