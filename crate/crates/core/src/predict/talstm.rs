//! Stacked LSTM followed by time attention and a learned reduction over time.

use super::attention::{TimeAttention, TimeAttentionTrace};
use crate::error::{invalid, shape_err, Result};
use crate::forecast::{LstmStack, LstmTrace};
use crate::numerics::{prefixed, prefixed_mut, softmax_backward, softmax_in_place, Linear, Matrix, Parameterized, RngStream};

#[derive(Clone, Debug, PartialEq)]
pub struct TimeAttentionLstm {
    pub lstm: LstmStack,
    pub attention: TimeAttention,
    /// Scores each context vector; scores are softmaxed over time.
    pub reduce: Linear,
    pub out: Linear,
}

pub struct TalstmTrace {
    lstm: Vec<LstmTrace>,
    attention: TimeAttentionTrace,
    contexts: Matrix,
    pub alpha: Matrix,
    pub beta: Vec<f64>,
    pooled: Vec<f64>,
    pub prediction: f64,
}

impl TimeAttentionLstm {
    pub fn new(channels: usize, hidden: usize, layers: usize, d_att: usize, literal: bool, stream: &RngStream) -> Result<Self> {
        if channels == 0 || hidden == 0 || layers == 0 || d_att == 0 {
            return Err(invalid!(
                "time-attention LSTM sizes must be positive (channels {channels}, hidden {hidden}, layers {layers}, d_att {d_att})"
            ));
        }
        Ok(TimeAttentionLstm {
            lstm: LstmStack::new(channels, hidden, layers, &stream.child("lstm")),
            attention: TimeAttention::new(hidden, d_att, literal, &stream.child("attention")),
            reduce: Linear::new(d_att, 1, &stream.child("reduce")),
            out: Linear::new(d_att, 1, &stream.child("out")),
        })
    }

    pub fn channels(&self) -> usize {
        self.lstm.layers[0].input_dim()
    }

    /// `series` is `C x T`; the LSTM sees one C-vector per step.
    pub fn forward(&self, series: &Matrix) -> Result<TalstmTrace> {
        if series.rows() != self.channels() || series.cols() == 0 {
            return Err(shape_err!(
                "time-attention LSTM takes {} channels, got {:?}",
                self.channels(),
                series.shape()
            ));
        }
        let lstm = self.lstm.forward(&series.transpose())?;
        let h = lstm.last().expect("at least one layer").hidden_states();
        let (att, attention) = self.attention.forward(&h)?;
        let contexts = att.contexts;
        let mut beta = Vec::with_capacity(contexts.rows());
        for t in 0..contexts.rows() {
            beta.push(self.reduce.forward(contexts.row(t))?[0]);
        }
        softmax_in_place(&mut beta);
        let mut pooled = vec![0.0; contexts.cols()];
        for (t, &b) in beta.iter().enumerate() {
            for (p, c) in pooled.iter_mut().zip(contexts.row(t)) {
                *p += b * c;
            }
        }
        let prediction = self.out.forward(&pooled)?[0];
        Ok(TalstmTrace {
            lstm,
            attention,
            contexts,
            alpha: att.alpha,
            beta,
            pooled,
            prediction,
        })
    }

    pub fn predict(&self, series: &Matrix) -> Result<f64> {
        Ok(self.forward(series)?.prediction)
    }

    pub fn backward(&self, tr: &TalstmTrace, d_pred: f64, grads: &mut TimeAttentionLstm) -> Result<()> {
        let d_pooled = self.out.backward(&tr.pooled, &[d_pred], &mut grads.out);
        let t_len = tr.contexts.rows();
        let mut d_contexts = Matrix::zeros(t_len, tr.contexts.cols());
        let mut d_beta = vec![0.0; t_len];
        for t in 0..t_len {
            d_beta[t] = crate::numerics::dot(tr.contexts.row(t), &d_pooled);
            for (d, p) in d_contexts.row_mut(t).iter_mut().zip(&d_pooled) {
                *d = tr.beta[t] * p;
            }
        }
        let mut d_scores = vec![0.0; t_len];
        softmax_backward(&tr.beta, &d_beta, &mut d_scores);
        for t in 0..t_len {
            let dc = self.reduce.backward(tr.contexts.row(t), &[d_scores[t]], &mut grads.reduce);
            for (d, v) in d_contexts.row_mut(t).iter_mut().zip(dc) {
                *d += v;
            }
        }
        let dh = self.attention.backward(&tr.attention, &d_contexts, &mut grads.attention)?;
        self.lstm.backward(&tr.lstm, &dh, &mut grads.lstm)?;
        Ok(())
    }
}

impl Parameterized for TimeAttentionLstm {
    fn params(&self) -> Vec<(String, &Matrix)> {
        let mut v = prefixed("lstm", self.lstm.params());
        v.extend(prefixed("attention", self.attention.params()));
        v.extend(prefixed("reduce", self.reduce.params()));
        v.extend(prefixed("out", self.out.params()));
        v
    }

    fn params_mut(&mut self) -> Vec<(String, &mut Matrix)> {
        let mut v = prefixed_mut("lstm", self.lstm.params_mut());
        v.extend(prefixed_mut("attention", self.attention.params_mut()));
        v.extend(prefixed_mut("reduce", self.reduce.params_mut()));
        v.extend(prefixed_mut("out", self.out.params_mut()));
        v
    }
}
