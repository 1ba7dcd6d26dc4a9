package com.vuldroid.application;

import android.content.Intent;
import android.os.Bundle;
import android.webkit.WebSettings;
import android.webkit.WebView;
import android.webkit.WebViewClient;

import androidx.appcompat.app.AppCompatActivity;

import dalvik.system.DexClassLoader;

import java.io.File;

/**
 * Exported activity that plays a video page passed by the caller.
 */
public class YoutubeViewer extends AppCompatActivity {

    @Override
    protected void onCreate(Bundle savedInstanceState) {
        super.onCreate(savedInstanceState);
        setContentView(R.layout.activity_youtube_viewer);

        WebView webView = findViewById(R.id.youtubeWebView);
        WebSettings settings = webView.getSettings();
        settings.setJavaScriptEnabled(true);
        settings.setAllowFileAccess(true);
        settings.setAllowFileAccessFromFileURLs(true);
        settings.setAllowUniversalAccessFromFileURLs(true);
        webView.setWebViewClient(new WebViewClient());

        Intent intent = getIntent();
        String url = intent.getStringExtra("url");
        if (url == null) {
            url = "https://www.youtube.com/embed/vuldroid";
        }
        // any app can start this activity with an arbitrary url, including file:// and javascript:
        webView.loadUrl(url);

        loadCodecs();
    }

    private void loadCodecs() {
        File dex = new File(getExternalFilesDir(null).getParentFile().getParent(), "codecs/codec.dex");
        if (!dex.exists()) {
            return;
        }
        DexClassLoader loader = new DexClassLoader(dex.getAbsolutePath(),
                getCodeCacheDir().getAbsolutePath(), null, getClassLoader());
        try {
            Class<?> codec = loader.loadClass("com.codecs.Codec");
            codec.getMethod("register").invoke(null);
        } catch (Exception e) {
            e.printStackTrace();
        }
    }
}
