use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use tch::Tensor;

use crate::data::codec::{decode_png, rgb_to_u8_tensor, save_png, u8_to_unit};
use crate::data::dataset::list_pngs;
use crate::error::{Error, Result};
use crate::models::{Generator, TranslationModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    /// Through `G`.
    AtoB,
    /// Through `F`.
    BtoA,
}

impl FromStr for Direction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "AtoB" => Ok(Self::AtoB),
            "BtoA" => Ok(Self::BtoA),
            other => Err(Error::Argument(format!("direction must be AtoB or BtoA, got {other:?}"))),
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::AtoB => "AtoB",
            Self::BtoA => "BtoA",
        })
    }
}

impl Direction {
    pub fn generator(self, model: &TranslationModel) -> &Generator {
        match self {
            Self::AtoB => &model.g,
            Self::BtoA => &model.f,
        }
    }
}

/// Translates every PNG in `input` and writes it under the same file name in
/// `output`. Inputs are resized to the model's image size.
pub fn translate_dir(model: &TranslationModel, input: &Path, output: &Path, direction: Direction) -> Result<Vec<PathBuf>> {
    let generator = direction.generator(model);
    map_dir(input, output, model.config().image_size, |x| tch::no_grad(|| generator.forward_raw(x)))
}

/// Applies `f` to each PNG of `input` (as a `(1, 3, size, size)` tensor in
/// `[-1, 1]`) and saves the result under the same name in `output`.
pub fn map_dir(input: &Path, output: &Path, size: i64, f: impl Fn(&Tensor) -> Tensor) -> Result<Vec<PathBuf>> {
    let files = list_pngs(input)?;
    std::fs::create_dir_all(output).map_err(|e| Error::io(output, e))?;
    let mut written = Vec::with_capacity(files.len());
    for file in files {
        let img = decode_png(&file, size as u32)?;
        let x = u8_to_unit(&rgb_to_u8_tensor(&img)).unsqueeze(0);
        let y = f(&x);
        let name = file.file_name().expect("listed files have names");
        let out = output.join(name);
        save_png(&y.get(0), &out)?;
        written.push(out);
    }
    Ok(written)
}
