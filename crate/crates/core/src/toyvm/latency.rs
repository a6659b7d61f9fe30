use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::isa::Opcode;
use crate::error::ConfigError;

/// Cycles per opcode. Loaded tables replace the defaults entirely, so a
/// missing opcode surfaces as a configuration error when it is looked up.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LatencyTable {
    cycles: BTreeMap<Opcode, u32>,
}

impl Default for LatencyTable {
    fn default() -> Self {
        use Opcode::*;
        let cycles = Opcode::ALL
            .iter()
            .map(|&op| {
                let c = match op {
                    Mul => 3,
                    Div | Rem => 10,
                    Fadd | Fsub | Vadd => 3,
                    Fmul | Vmul => 5,
                    Fdiv => 15,
                    Ld | Fld | Vld => 4,
                    _ => 1,
                };
                (op, c)
            })
            .collect();
        LatencyTable { cycles }
    }
}

impl LatencyTable {
    pub fn from_pairs(pairs: impl IntoIterator<Item = (Opcode, u32)>) -> Result<Self, ConfigError> {
        let cycles: BTreeMap<Opcode, u32> = pairs.into_iter().collect();
        if let Some((op, _)) = cycles.iter().find(|(_, &c)| c == 0) {
            return Err(ConfigError::Invalid(format!("latency of `{op}` must be at least 1")));
        }
        Ok(LatencyTable { cycles })
    }

    /// Parses `mnemonic = cycles` lines (TOML).
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let raw: BTreeMap<String, u32> =
            toml::from_str(text).map_err(|e| ConfigError::Invalid(format!("latency table: {e}")))?;
        let pairs = raw
            .into_iter()
            .map(|(k, v)| k.parse::<Opcode>().map(|op| (op, v)).map_err(ConfigError::Invalid))
            .collect::<Result<Vec<_>, _>>()?;
        Self::from_pairs(pairs)
    }

    pub fn to_toml(&self) -> String {
        self.cycles
            .iter()
            .map(|(op, c)| format!("{} = {c}\n", op.mnemonic()))
            .collect()
    }

    pub fn get(&self, op: Opcode) -> Result<u32, ConfigError> {
        self.cycles
            .get(&op)
            .copied()
            .ok_or(ConfigError::MissingLatency(op))
    }
}
