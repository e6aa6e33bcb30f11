//! Step-wise synthesis of `.fsim` simulations from a text specification,
//! against any text-completion provider.

pub mod cassette;
pub mod live;
pub mod pipeline;
pub mod provider;
pub mod templates;
pub mod transcript;

pub use cassette::{Cassette, CassetteRecord, Recorder, ReplayMode, ReplayProvider, ScriptProvider};
pub use live::{LiveConfig, LiveProvider};
pub use pipeline::{synthesize, Plan, StepContext, SynthConfig, SynthError, SynthFailure, Synthesizer};
pub use provider::{Message, Provider, ProviderError, ProviderRequest, ProviderResponse, Purpose, Role, TokenCounts};
pub use templates::Templates;
pub use transcript::Transcript;
