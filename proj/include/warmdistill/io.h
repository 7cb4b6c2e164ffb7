// Copyright 2026 The Warmdistill Authors.
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


#ifndef WARMDISTILL_IO_H_
#define WARMDISTILL_IO_H_

#include <string>
#include <string_view>
#include <vector>

namespace wd {

// Whole-file helpers. Failures raise kIo with the path.
std::string ReadTextFile(const std::string& path);
void WriteTextFile(const std::string& path, std::string_view contents);
// Non-empty lines of a JSON-lines file.
std::vector<std::string> ReadLines(const std::string& path);

}  // namespace wd

#endif  // WARMDISTILL_IO_H_
