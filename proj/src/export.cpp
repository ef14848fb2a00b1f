// Copyright (c) 2026 The pclprompt Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "pclprompt/export.hpp"

#include <charconv>
#include <stdexcept>

namespace pclprompt {

EmbeddingTap parse_embedding_tap(const std::string& text) {
  if (text == "input_N") return EmbeddingTap::LastInput;
  if (text == "output_N") return EmbeddingTap::LastOutput;
  throw std::invalid_argument("unknown embedding tap '" + text + "' (expected input_N or output_N)");
}

template <typename T>
TokenSequence<T> tap_sequence(const TunedModel<T>& model, const PointCloud& cloud,
                              EmbeddingTap tap) {
  ad::NoGradGuard guard;
  TokenSequence<T> last_input;
  auto out = model.finish(model.prefix(cloud), &last_input);
  return tap == EmbeddingTap::LastInput ? last_input : out;
}

template <typename T>
void write_embeddings_csv(std::ostream& out, const TunedModel<T>& model,
                          const std::vector<PointCloud>& samples, EmbeddingTap tap) {
  const std::size_t d = model.backbone.config().width;
  out << "sample,class,submode,role,token";
  for (std::size_t f = 0; f < d; ++f) out << ",f" << f;
  out << '\n';
  char buf[32];
  for (std::size_t s = 0; s < samples.size(); ++s) {
    const auto seq = tap_sequence(model, samples[s], tap);
    const auto values = seq.tokens.value();
    const std::string label = samples[s].label ? std::to_string(*samples[s].label) : "";
    for (std::size_t t = 0; t < seq.length(); ++t) {
      out << s << ',' << label << ',' << samples[s].submode << ',' << role_name(seq.roles[t])
          << ',' << t;
      for (std::size_t f = 0; f < d; ++f) {
        const auto r = std::to_chars(buf, buf + sizeof buf, values[t * d + f]);
        out << ',' << std::string_view(buf, static_cast<std::size_t>(r.ptr - buf));
      }
      out << '\n';
    }
  }
}

template TokenSequence<float> tap_sequence(const TunedModel<float>&, const PointCloud&,
                                           EmbeddingTap);
template TokenSequence<double> tap_sequence(const TunedModel<double>&, const PointCloud&,
                                            EmbeddingTap);
template void write_embeddings_csv(std::ostream&, const TunedModel<float>&,
                                   const std::vector<PointCloud>&, EmbeddingTap);
template void write_embeddings_csv(std::ostream&, const TunedModel<double>&,
                                   const std::vector<PointCloud>&, EmbeddingTap);

}  // namespace pclprompt
