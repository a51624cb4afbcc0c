use bichore_core::Instance;
use sha2::{Digest, Sha256};

/// SHA-256 of the canonical normalized encoding:
/// `bichore-instance-v1\n{n} {m}\n{k}\n` followed by one line of `0`/`1`
/// per agent. Uniform instances use `k = 1` and all zeros.
pub fn instance_digest(n: usize, m: usize, normalized: Option<&Instance>) -> String {
    let mut text = format!("bichore-instance-v1\n{n} {m}\n");
    match normalized {
        Some(inst) => {
            text.push_str(&format!("{}/{}\n", inst.k().numer(), inst.k().denom()));
            for i in 0..n {
                text.extend(inst.high_row(i).iter().map(|&h| if h { '1' } else { '0' }));
                text.push('\n');
            }
        }
        None => {
            text.push_str("1/1\n");
            for _ in 0..n {
                text.push_str(&"0".repeat(m));
                text.push('\n');
            }
        }
    }
    hex::encode(Sha256::digest(text.as_bytes()))
}
