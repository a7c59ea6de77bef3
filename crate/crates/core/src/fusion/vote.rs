use crate::{Error, Result, Tensor};

/// Per-sample class with the most votes. Ties go to the tied class with
/// the highest probability averaged over all voters, then to the lowest
/// class index.
///
/// `votes[m][n]` is voter `m`'s label for sample `n`; `probs[m]` is that
/// voter's `[N × C]` probability matrix.
pub fn majority_vote(votes: &[Vec<usize>], probs: &[Tensor<f32>]) -> Result<Vec<usize>> {
    if votes.is_empty() {
        return Err(Error::InvalidParameter("majority vote needs at least one voter".into()));
    }
    if probs.len() != votes.len() {
        return Err(Error::Dimension(format!("{} vote lists, {} probability sets", votes.len(), probs.len())));
    }
    let n = votes[0].len();
    let (_, c) = probs[0].dims2()?;
    for (v, p) in votes.iter().zip(probs) {
        if v.len() != n || p.shape() != [n, c] {
            return Err(Error::Dimension(format!(
                "voter with {} labels and probabilities {:?}, expected {n} and [{n}, {c}]",
                v.len(),
                p.shape()
            )));
        }
        if let Some(&bad) = v.iter().find(|&&l| l >= c) {
            return Err(Error::InvalidLabel(format!("vote {bad} with {c} classes")));
        }
    }
    let mut out = Vec::with_capacity(n);
    let mut counts = vec![0usize; c];
    for i in 0..n {
        counts.fill(0);
        for v in votes {
            counts[v[i]] += 1;
        }
        let top = *counts.iter().max().expect("c >= 1");
        let tied: Vec<usize> = (0..c).filter(|&k| counts[k] == top).collect();
        if tied.len() == 1 {
            out.push(tied[0]);
            continue;
        }
        let mean = |k: usize| probs.iter().map(|p| p.row(i)[k] as f64).sum::<f64>() / probs.len() as f64;
        let mut best = tied[0];
        let mut best_mean = mean(best);
        for &k in &tied[1..] {
            let m = mean(k);
            if m > best_mean {
                best = k;
                best_mean = m;
            }
        }
        out.push(best);
    }
    Ok(out)
}
