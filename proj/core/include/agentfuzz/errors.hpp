#pragma once

#include <stdexcept>
#include <string>

namespace agentfuzz {

// Base of every error the library raises. Catch this at tool boundaries.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define AGENTFUZZ_DECLARE_ERROR(Name)            \
  class Name : public Error {                    \
   public:                                       \
    using Error::Error;                          \
  }

// core-model
AGENTFUZZ_DECLARE_ERROR(InvariantViolation);
AGENTFUZZ_DECLARE_ERROR(SchemaError);

// llm-gateway
AGENTFUZZ_DECLARE_ERROR(ProviderUnavailable);
AGENTFUZZ_DECLARE_ERROR(AuthError);
AGENTFUZZ_DECLARE_ERROR(ContractError);

// mutation-engine
AGENTFUZZ_DECLARE_ERROR(DegenerateMutation);
AGENTFUZZ_DECLARE_ERROR(OperatorInapplicable);
AGENTFUZZ_DECLARE_ERROR(TemplateError);

// fitness-engine
AGENTFUZZ_DECLARE_ERROR(BatchSizeMismatch);
AGENTFUZZ_DECLARE_ERROR(ZeroVector);
AGENTFUZZ_DECLARE_ERROR(DimMismatch);
AGENTFUZZ_DECLARE_ERROR(LengthMismatch);
AGENTFUZZ_DECLARE_ERROR(EmbedderUnavailable);

// mas-pipeline
AGENTFUZZ_DECLARE_ERROR(NoCodeFound);
AGENTFUZZ_DECLARE_ERROR(AdapterError);

// monitor-repair
AGENTFUZZ_DECLARE_ERROR(InsufficientTrials);

// eval-sandbox
AGENTFUZZ_DECLARE_ERROR(ProtocolError);
AGENTFUZZ_DECLARE_ERROR(SandboxFailure);

// datasets-reporting
AGENTFUZZ_DECLARE_ERROR(FormatError);
AGENTFUZZ_DECLARE_ERROR(EmptyDataset);
AGENTFUZZ_DECLARE_ERROR(UndefinedBaseline);
AGENTFUZZ_DECLARE_ERROR(EmptyFailureSet);
AGENTFUZZ_DECLARE_ERROR(IoError);

#undef AGENTFUZZ_DECLARE_ERROR

}  // namespace agentfuzz
