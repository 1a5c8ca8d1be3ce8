use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use contrastseg::amcp::Prompt;
use contrastseg::io;
use contrastseg::Rect;

/// Parses `point:X,Y[;X,Y...]`, `box:x0,y0,x1,y1`, `scribble:path.png` or
/// `mask:path.png`.
pub fn parse(spec: &str) -> Result<Prompt> {
    let (kind, body) = spec
        .split_once(':')
        .ok_or_else(|| anyhow!("prompt {spec:?} lacks a type prefix"))?;
    match kind {
        "point" => {
            let pts = body
                .split(';')
                .map(|p| {
                    let v = numbers(p)?;
                    match v[..] {
                        [x, y] => Ok((x, y)),
                        _ => bail!("point {p:?} needs X,Y"),
                    }
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(Prompt::Point(pts))
        }
        "box" => match numbers(body)?[..] {
            [x0, y0, x1, y1] => Ok(Prompt::Box(Rect::new(x0, y0, x1, y1)?)),
            _ => bail!("box {body:?} needs x0,y0,x1,y1"),
        },
        "scribble" => Ok(Prompt::Scribble(load(body)?)),
        "mask" => Ok(Prompt::CoarseMask(load(body)?)),
        _ => bail!("unknown prompt type {kind:?}"),
    }
}

fn numbers(s: &str) -> Result<Vec<usize>> {
    s.split(',')
        .map(|v| {
            v.trim()
                .parse::<usize>()
                .with_context(|| format!("{v:?} is not a pixel coordinate"))
        })
        .collect()
}

fn load(path: &str) -> Result<contrastseg::BitMask> {
    if path.is_empty() {
        bail!("prompt path is empty");
    }
    Ok(io::load_mask(Path::new(path))?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn points_and_boxes() {
        assert_eq!(parse("point:3,4").unwrap(), Prompt::Point(vec![(3, 4)]));
        assert_eq!(
            parse("point:3,4;10, 2").unwrap(),
            Prompt::Point(vec![(3, 4), (10, 2)])
        );
        assert_eq!(
            parse("box:1,2,30,40").unwrap(),
            Prompt::Box(Rect::new(1, 2, 30, 40).unwrap())
        );
    }

    #[test]
    fn malformed() {
        for s in [
            "",
            "point",
            "point:1",
            "point:1,2,3",
            "box:1,2,3",
            "box:5,5,1,1",
            "lasso:1,2",
            "point:-1,2",
            "mask:",
        ] {
            assert!(parse(s).is_err(), "{s}");
        }
    }

    #[test]
    fn mask_from_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.png");
        let m = contrastseg::BitMask::from_fn(8, 6, |x, y| x > 2 && y < 4);
        io::save_mask(&m, &p).unwrap();
        assert_eq!(
            parse(&format!("mask:{}", p.display())).unwrap(),
            Prompt::CoarseMask(m.clone())
        );
        assert_eq!(
            parse(&format!("scribble:{}", p.display())).unwrap(),
            Prompt::Scribble(m)
        );
        assert!(parse("mask:/nonexistent/x.png").is_err());
    }
}
