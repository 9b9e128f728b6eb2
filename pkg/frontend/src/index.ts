export {
  FMAP_MAGIC,
  DMAP_MAGIC,
  FORMAT_VERSION,
  GridMap,
  readDepthMap,
  readFeatureMap,
  writeDepthMap,
  writeFeatureMap,
} from './fmap'
export { readMaskPng, readPng, RgbImage, writePng } from './png'
export {
  DEFAULT_SEED,
  FeatureNetwork,
  TapName,
  TAPS,
  WEIGHT_VARIANT,
} from './vgg'
export { extract, ExtractionRequest, ExtractionResult, validateLayer } from './extract'
export { lpipsImages, lpipsWarped, maskedRmse } from './lpips'
