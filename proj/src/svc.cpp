#include "svclab/svc.hpp"

namespace svclab::svc {

LossVariant parse_variant(std::string_view s) {
  if (s == "recon" || s == "RECON") return LossVariant::recon;
  if (s == "bn-lr" || s == "recon-bn-lr" || s == "RECON_BN_LR") return LossVariant::recon_bn_lr;
  if (s == "sie-lr" || s == "recon-sie-lr" || s == "RECON_SIE_LR") return LossVariant::recon_sie_lr;
  throw Error(Errc::config, "unknown loss variant '" + std::string(s) + "' (expected recon, bn-lr or sie-lr)");
}

std::string_view to_string(LossVariant v) {
  switch (v) {
    case LossVariant::recon: return "recon";
    case LossVariant::recon_bn_lr: return "bn-lr";
    case LossVariant::recon_sie_lr: return "sie-lr";
  }
  return "recon";
}

SvcConfig SvcConfig::toy() {
  SvcConfig c;
  c.d_sie = 32;
  c.enc_conv_channels = 32;
  c.enc_conv_layers = 2;
  c.enc_lstm_layers = 1;
  c.dec_pre_hidden = 64;
  c.dec_conv_channels = 64;
  c.dec_conv_layers = 1;
  c.dec_lstm_hidden = 128;
  c.dec_lstm_layers = 1;
  return c;
}

void SvcConfig::validate() const {
  if (n_mels < 1 || frames < 1 || d_sie < 1 || kernel < 1 || kernel % 2 == 0)
    throw Error(Errc::config, "conversion network sizes must be positive and the kernel odd");
  if (code_steps < 1 || frames % code_steps != 0)
    throw Error(Errc::config, "window length must be a multiple of the code length");
  if (code_channels < 2 || code_channels % 2 != 0)
    throw Error(Errc::config, "code channels must be even (two recurrent directions)");
  if (enc_lstm_layers < 1) throw Error(Errc::config, "encoder needs at least one recurrent layer");
  if (dec_pre_hidden < 1 || (dec_conv_layers > 0 && dec_conv_channels < 1) ||
      (dec_lstm_layers > 0 && dec_lstm_hidden < 1) || (enc_conv_layers > 0 && enc_conv_channels < 1))
    throw Error(Errc::config, "layer widths must be positive");
}

json SvcConfig::to_json() const {
  return json{{"n_mels", n_mels},
              {"frames", frames},
              {"d_sie", d_sie},
              {"code_steps", code_steps},
              {"code_channels", code_channels},
              {"kernel", kernel},
              {"enc_conv_channels", enc_conv_channels},
              {"enc_conv_layers", enc_conv_layers},
              {"enc_lstm_layers", enc_lstm_layers},
              {"dec_pre_hidden", dec_pre_hidden},
              {"dec_conv_channels", dec_conv_channels},
              {"dec_conv_layers", dec_conv_layers},
              {"dec_lstm_hidden", dec_lstm_hidden},
              {"dec_lstm_layers", dec_lstm_layers}};
}

SvcConfig SvcConfig::from_json(const json& j) {
  SvcConfig c;
  c.n_mels = j.value("n_mels", c.n_mels);
  c.frames = j.value("frames", c.frames);
  c.d_sie = j.value("d_sie", c.d_sie);
  c.code_steps = j.value("code_steps", c.code_steps);
  c.code_channels = j.value("code_channels", c.code_channels);
  c.kernel = j.value("kernel", c.kernel);
  c.enc_conv_channels = j.value("enc_conv_channels", c.enc_conv_channels);
  c.enc_conv_layers = j.value("enc_conv_layers", c.enc_conv_layers);
  c.enc_lstm_layers = j.value("enc_lstm_layers", c.enc_lstm_layers);
  c.dec_pre_hidden = j.value("dec_pre_hidden", c.dec_pre_hidden);
  c.dec_conv_channels = j.value("dec_conv_channels", c.dec_conv_channels);
  c.dec_conv_layers = j.value("dec_conv_layers", c.dec_conv_layers);
  c.dec_lstm_hidden = j.value("dec_lstm_hidden", c.dec_lstm_hidden);
  c.dec_lstm_layers = j.value("dec_lstm_layers", c.dec_lstm_layers);
  return c;
}

double loss_recon(const MatrixXf& x_hat, const MatrixXf& x) {
  if (x_hat.rows() != x.rows() || x_hat.cols() != x.cols()) throw Error(Errc::shape, "loss inputs differ in shape");
  return (x_hat.cast<double>() - x.cast<double>()).cwiseAbs().mean();
}

}  // namespace svclab::svc
