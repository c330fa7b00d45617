import { defineConfig } from 'vite';

export default defineConfig({
  server: {
    proxy: {
      // the Python service owns /api; run it with `speechmelody serve`
      '/api': 'http://127.0.0.1:8000',
    },
  },
  build: {
    outDir: 'dist',
  },
  test: {
    environment: 'happy-dom',
  },
});
