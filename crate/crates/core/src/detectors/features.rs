use crate::encoders::{EncodedRow, FittedEncoder};
use crate::error::{Error, Result};

/// Row-major design matrix for the logistic and tree detectors.
///
/// `space` names the feature space (vocabulary or column layout) so a model
/// can refuse inputs encoded differently from its training data.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub space: String,
    pub n_features: usize,
    pub storage: Storage,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Storage {
    /// CSR layout; column indices are strictly increasing within a row.
    Sparse {
        indptr: Vec<usize>,
        indices: Vec<u32>,
        values: Vec<f64>,
    },
    Dense(Vec<f64>),
}

#[derive(Debug, Clone, Copy)]
pub enum RowView<'a> {
    Sparse(&'a [u32], &'a [f64]),
    Dense(&'a [f64]),
}

impl RowView<'_> {
    pub fn get(&self, f: usize) -> f64 {
        match *self {
            RowView::Sparse(idx, vals) => idx.binary_search(&(f as u32)).map(|k| vals[k]).unwrap_or(0.0),
            RowView::Dense(v) => v[f],
        }
    }

    /// `w · x` over the stored entries.
    pub fn dot(&self, w: &[f64]) -> f64 {
        match *self {
            RowView::Sparse(idx, vals) => idx.iter().zip(vals).map(|(&i, v)| w[i as usize] * v).sum(),
            RowView::Dense(v) => v.iter().zip(w).map(|(a, b)| a * b).sum(),
        }
    }

    pub fn for_each(&self, mut f: impl FnMut(usize, f64)) {
        match *self {
            RowView::Sparse(idx, vals) => idx.iter().zip(vals).for_each(|(&i, &v)| f(i as usize, v)),
            RowView::Dense(v) => v.iter().enumerate().for_each(|(i, &x)| f(i, x)),
        }
    }
}

/// Feature-space id of everything an encoder produces.
pub fn feature_space(enc: &FittedEncoder) -> String {
    match enc {
        FittedEncoder::CharTrigram { vocab, .. } | FittedEncoder::WordTrigram { vocab, .. } => {
            format!("{}:{}", enc.kind().name(), vocab.fingerprint())
        }
        FittedEncoder::FlatText { vocab, max_len, .. } => format!("flat-text:{}:{max_len}", vocab.fingerprint()),
        // Codecs are per table; the layout is what the model sees.
        FittedEncoder::Column { d_num, d_cat, .. } => format!("column:{d_num}x{d_cat}"),
    }
}

impl FeatureMatrix {
    pub fn dense(space: impl Into<String>, n_features: usize, data: Vec<f64>) -> Result<Self> {
        if n_features == 0 || !data.len().is_multiple_of(n_features) {
            return Err(Error::TensorShape(format!(
                "{} values do not form rows of {n_features}",
                data.len()
            )));
        }
        Ok(FeatureMatrix {
            space: space.into(),
            n_features,
            storage: Storage::Dense(data),
        })
    }

    /// Build from `(index, value)` rows; indices must be sorted and unique.
    pub fn sparse(space: impl Into<String>, n_features: usize, rows: &[Vec<(u32, f64)>]) -> Result<Self> {
        let mut indptr = vec![0];
        let mut indices = Vec::new();
        let mut values = Vec::new();
        for row in rows {
            if row.windows(2).any(|w| w[0].0 >= w[1].0) || row.iter().any(|&(i, _)| i as usize >= n_features) {
                return Err(Error::TensorShape("sparse row indices must be sorted and in range".into()));
            }
            for &(i, v) in row {
                indices.push(i);
                values.push(v);
            }
            indptr.push(indices.len());
        }
        Ok(FeatureMatrix {
            space: space.into(),
            n_features,
            storage: Storage::Sparse { indptr, indices, values },
        })
    }

    /// Lay out encoded rows in the feature space of `enc`.
    pub fn from_encoded(rows: &[EncodedRow], enc: &FittedEncoder) -> Result<Self> {
        let space = feature_space(enc);
        match enc {
            FittedEncoder::CharTrigram { vocab, .. } | FittedEncoder::WordTrigram { vocab, .. } => {
                let sparse: Vec<Vec<(u32, f64)>> = rows
                    .iter()
                    .map(|r| match r {
                        EncodedRow::Bag(b) => Ok(b.entries.iter().map(|&(i, c)| (i, c as f64)).collect()),
                        _ => Err(Error::FeatureSpaceMismatch {
                            expected: space.clone(),
                            found: "non-bag row".into(),
                        }),
                    })
                    .collect::<Result<_>>()?;
                FeatureMatrix::sparse(space, vocab.size(), &sparse)
            }
            FittedEncoder::FlatText { max_len, .. } => {
                let mut data = vec![0.0; rows.len() * max_len];
                for (r, row) in rows.iter().enumerate() {
                    let EncodedRow::Tokens(t) = row else {
                        return Err(Error::FeatureSpaceMismatch {
                            expected: space,
                            found: "non-token row".into(),
                        });
                    };
                    for (j, &id) in t.ids.iter().take(*max_len).enumerate() {
                        data[r * max_len + j] = id as f64;
                    }
                }
                FeatureMatrix::dense(space, *max_len, data)
            }
            FittedEncoder::Column { d_num, d_cat, .. } => {
                let width = 2 * (d_num + d_cat);
                let mut data = Vec::with_capacity(rows.len() * width);
                for row in rows {
                    let EncodedRow::Columns(c) = row else {
                        return Err(Error::FeatureSpaceMismatch {
                            expected: space,
                            found: "non-column row".into(),
                        });
                    };
                    data.extend(c.flatten());
                }
                FeatureMatrix::dense(space, width, data)
            }
        }
    }

    pub fn n_rows(&self) -> usize {
        match &self.storage {
            Storage::Sparse { indptr, .. } => indptr.len() - 1,
            Storage::Dense(d) => d.len() / self.n_features,
        }
    }

    pub fn row(&self, i: usize) -> RowView<'_> {
        match &self.storage {
            Storage::Sparse { indptr, indices, values } => {
                let (a, b) = (indptr[i], indptr[i + 1]);
                RowView::Sparse(&indices[a..b], &values[a..b])
            }
            Storage::Dense(d) => RowView::Dense(&d[i * self.n_features..(i + 1) * self.n_features]),
        }
    }

    /// Fail unless this matrix lives in `space`.
    pub fn check_space(&self, space: &str, n_features: usize) -> Result<()> {
        if self.space != space || self.n_features != n_features {
            return Err(Error::FeatureSpaceMismatch {
                expected: format!("{space} ({n_features} features)"),
                found: format!("{} ({} features)", self.space, self.n_features),
            });
        }
        Ok(())
    }
}
