export {
  FORMAT_VERSION,
  LayerData,
  MAGIC,
  ReadStack,
  StackMeta,
  SUM_TOLERANCE,
  buildManifest,
  decodeLayer,
  encodeLayer,
  layerFileName,
  readStack,
  validateLayer,
  writeStack,
} from "./attnStore.js";
export {
  ExtractionConfig,
  ExtractionResult,
  ExtractedLayer,
  LATENT_FACTOR,
  NUM_HEADS,
  boxDownsample,
  checkConfig,
  extractLayer,
  extractStack,
  latentSide,
  noisedLatent,
  unetResolutions,
} from "./backend.js";
export { HeadLayer, headKlStat, symmetrizedKl } from "./headStats.js";
export {
  GrayImage,
  readGrayPng,
  resizeGray,
  toSigned,
  writeGrayPng,
} from "./image.js";
export { SeededRng } from "./rng.js";
export { NUM_TRAIN_TIMESTEPS, alphaBars, betas, noiseScales } from "./schedule.js";
export { main as cliMain } from "./cli.js";
