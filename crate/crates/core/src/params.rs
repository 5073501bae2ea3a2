//! The canonical registry of browser-observable ad rendering parameters.
//!
//! Every parameter has a fixed wire name, a position in the canonical
//! ordering used by CSV headers, and a unit kind used to choose default
//! synthetic distributions.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Physical kind of a parameter value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ParamKind {
    Count,
    Bytes,
    Millis,
    Pixels,
}

macro_rules! params {
    ($($variant:ident => $name:literal : $kind:ident,)*) => {
        /// One browser-observable ad rendering parameter.
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
        pub enum Param {
            $($variant,)*
        }

        impl Param {
            /// All parameters in canonical order.
            pub const ALL: &'static [Param] = &[$(Param::$variant,)*];

            pub const fn name(self) -> &'static str {
                match self {
                    $(Param::$variant => $name,)*
                }
            }

            pub const fn kind(self) -> ParamKind {
                match self {
                    $(Param::$variant => ParamKind::$kind,)*
                }
            }
        }
    };
}

params! {
    UsedJsHeapSize => "usedJSHeapSize": Bytes,
    TotalJsHeapSize => "totalJSHeapSize": Bytes,
    Entries => "entries": Count,
    EntriesRequested => "entries_requested": Count,
    ScreenSize => "screen_size": Pixels,
    EtElement => "et_element": Count,
    EtNavigation => "et_navigation": Count,
    EtResource => "et_resource": Count,
    EtMark => "et_mark": Count,
    EtMeasure => "et_measure": Count,
    EtPaint => "et_paint": Count,
    EtLongtask => "et_longtask": Count,
    ItElement => "it_element": Count,
    ItCss => "it_css": Count,
    ItEmbed => "it_embed": Count,
    ItImg => "it_img": Count,
    ItLink => "it_link": Count,
    ItObject => "it_object": Count,
    ItScript => "it_script": Count,
    ItSubdocument => "it_subdocument": Count,
    ItSvg => "it_svg": Count,
    ItXmlHttpRequest => "it_xmlhttprequest": Count,
    ItNavigation => "it_navigation": Count,
    ItOther => "it_other": Count,
    DurationMean => "duration_mean": Millis,
    TransferSizeMean => "transferSize_mean": Bytes,
    DecodedBodySizeMean => "dedodedBodySize_mean": Bytes,
    RedirectTimeMean => "redirectTime_mean": Millis,
    AppCacheMean => "app_cache_mean": Millis,
    DnsMean => "dns_mean": Millis,
    TcpMean => "tcp_mean": Millis,
    RequestMean => "request_mean": Millis,
    ResponseMean => "response_mean": Millis,
    AdNavigationDuration => "ad_navigation_duration": Millis,
    AdNavigationTransferSize => "ad_navigation_transferSize": Bytes,
    AdNavigationDecodedBodySize => "ad_navigation_decodedBodySize": Bytes,
    AdNavigationAppCache => "ad_navigation_app_cache": Millis,
    AdNavigationDns => "ad_navigation_dns": Millis,
    AdNavigationTcp => "ad_navigation_tcp": Millis,
    AdNavigationRequest => "ad_navigation_request": Millis,
    AdNavigationResponse => "ad_navigation_response": Millis,
    AdNavigationProcessing => "ad_navigation_processing": Millis,
    AdNavigationOnLoad => "ad_navigation_onLoad": Millis,
}

pub const PARAM_COUNT: usize = Param::ALL.len();

/// The fifteen parameters retained by manual inspection before automatic
/// feature selection; the default candidate list.
pub const DEFAULT_CANDIDATES: [Param; 15] = [
    Param::ScreenSize,
    Param::TotalJsHeapSize,
    Param::Entries,
    Param::EtPaint,
    Param::EtResource,
    Param::ItXmlHttpRequest,
    Param::ItImg,
    Param::ItScript,
    Param::AdNavigationDuration,
    Param::AdNavigationProcessing,
    Param::AdNavigationOnLoad,
    Param::DurationMean,
    Param::RedirectTimeMean,
    Param::RequestMean,
    Param::ResponseMean,
];

impl Param {
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_name(name: &str) -> Option<Param> {
        Param::ALL.iter().copied().find(|p| p.name() == name)
    }

    pub fn parse(name: &str) -> Result<Param> {
        Param::from_name(name).ok_or_else(|| Error::Config(format!("unknown parameter `{name}`")))
    }
}

impl fmt::Display for Param {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl Serialize for Param {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for Param {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let name = String::deserialize(d)?;
        Param::from_name(&name)
            .ok_or_else(|| serde::de::Error::custom(format!("unknown parameter `{name}`")))
    }
}

/// Per-ad parameter record. Slots may be absent when the record comes from
/// a partial source such as a tag payload.
#[derive(Debug, Clone, PartialEq)]
pub struct AdRenderMetrics {
    values: [Option<f64>; PARAM_COUNT],
}

impl Default for AdRenderMetrics {
    fn default() -> Self {
        Self::empty()
    }
}

impl AdRenderMetrics {
    pub fn empty() -> Self {
        Self { values: [None; PARAM_COUNT] }
    }

    /// A complete record with every parameter set to zero.
    pub fn zeros() -> Self {
        Self { values: [Some(0.0); PARAM_COUNT] }
    }

    pub fn get(&self, p: Param) -> Option<f64> {
        self.values[p.index()]
    }

    /// Value of a parameter, failing with a resolution error when absent.
    pub fn value(&self, p: Param) -> Result<f64> {
        self.get(p).ok_or_else(|| Error::FeatureResolution(p.name().to_string()))
    }

    pub fn set(&mut self, p: Param, v: f64) {
        self.values[p.index()] = Some(v);
    }

    pub fn with(mut self, p: Param, v: f64) -> Self {
        self.set(p, v);
        self
    }

    pub fn is_complete(&self) -> bool {
        self.values.iter().all(Option::is_some)
    }

    pub fn iter(&self) -> impl Iterator<Item = (Param, f64)> + '_ {
        Param::ALL.iter().filter_map(|&p| self.get(p).map(|v| (p, v)))
    }

    /// Builds a record from wire-named values. Unknown names and negative or
    /// non-finite values are rejected.
    pub fn from_named<'a, I>(pairs: I) -> Result<Self>
    where
        I: IntoIterator<Item = (&'a str, f64)>,
    {
        let mut m = Self::empty();
        for (name, v) in pairs {
            let p = Param::from_name(name)
                .ok_or_else(|| Error::Domain(format!("unknown parameter `{name}`")))?;
            if !v.is_finite() || v < 0.0 {
                return Err(Error::Domain(format!(
                    "parameter `{name}` must be finite and non-negative, got {v}"
                )));
            }
            m.set(p, v);
        }
        Ok(m)
    }

    pub fn to_named(&self) -> BTreeMap<String, f64> {
        self.iter().map(|(p, v)| (p.name().to_string(), v)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn registry_names_are_unique() {
        let names: HashSet<_> = Param::ALL.iter().map(|p| p.name()).collect();
        assert_eq!(names.len(), PARAM_COUNT);
        assert_eq!(PARAM_COUNT, 43);
    }

    #[test]
    fn index_matches_position() {
        for (i, p) in Param::ALL.iter().enumerate() {
            assert_eq!(p.index(), i);
            assert_eq!(Param::from_name(p.name()), Some(*p));
        }
    }

    #[test]
    fn from_named_rejects_unknown_and_negative() {
        assert!(AdRenderMetrics::from_named([("tcp_mean", 1.0)]).is_ok());
        assert!(AdRenderMetrics::from_named([("tcp", 1.0)]).is_err());
        assert!(AdRenderMetrics::from_named([("tcp_mean", -1.0)]).is_err());
    }

    #[test]
    fn missing_value_names_the_parameter() {
        let m = AdRenderMetrics::empty();
        let err = m.value(Param::ScreenSize).unwrap_err();
        assert!(err.to_string().contains("screen_size"));
    }
}
