/*
 * Copyright (c) 2026, The slicedsm Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#ifndef DSM_ERRORS_HPP_
#define DSM_ERRORS_HPP_

#include <stdexcept>
#include <string>

namespace dsm {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define DSM_DEFINE_ERROR(Name)             \
  class Name : public Error {              \
   public:                                 \
    using Error::Error;                    \
  }

DSM_DEFINE_ERROR(AddressError);
DSM_DEFINE_ERROR(ConfigError);
DSM_DEFINE_ERROR(ProtocolError);
DSM_DEFINE_ERROR(LockError);
DSM_DEFINE_ERROR(TransportError);
DSM_DEFINE_ERROR(FrameError);
DSM_DEFINE_ERROR(ConnectError);
DSM_DEFINE_ERROR(AllocError);
DSM_DEFINE_ERROR(IoError);
DSM_DEFINE_ERROR(OracleViolation);

#undef DSM_DEFINE_ERROR

/// Raised by the simulator when the event queue drains while application
/// operations are still blocked. what() carries the report.
class DeadlockError : public Error {
 public:
  using Error::Error;
};

}  // namespace dsm

#endif  // DSM_ERRORS_HPP_
